from pathlib import Path
from pydantic_settings import BaseSettings
from functools import lru_cache
from typing import Optional

# Project root directory
ROOT_DIR = Path(__file__).parent.parent

# Phases at which the test-only crash hook may kill the process
CRASH_PHASES = ("pre_temp", "post_temp", "pre_rename", "post_rename")


class Settings(BaseSettings):
    """Server settings with environment variable support"""

    # Workspace
    RW_WORKSPACE: Optional[str] = None
    STATE_DIR_NAME: str = ".resilient_write"

    # Scratchpad: any non-empty value turns the scratchpad into a deposit box
    RW_SCRATCH_DISABLE_GET: str = ""

    # Test-only crash injection (one of CRASH_PHASES)
    RW_TEST_CRASH_PHASE: str = ""

    # Transport
    SERVER_NAME: str = "rw-server"
    SERVER_VERSION: str = "1.0.0"
    PROTOCOL_VERSION: str = "2024-11-05"
    MAX_FRAME_BYTES: int = 8 * 1024 * 1024

    # Write limits
    MAX_WRITE_BYTES: int = 64 * 1024 * 1024

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "allow"

    @property
    def scratch_get_disabled(self) -> bool:
        return bool(self.RW_SCRATCH_DISABLE_GET.strip())

    @property
    def crash_phase(self) -> Optional[str]:
        phase = self.RW_TEST_CRASH_PHASE.strip()
        return phase if phase in CRASH_PHASES else None


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()
