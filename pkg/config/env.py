import logging
import sys
from pathlib import Path
from typing import Dict
from dotenv import load_dotenv

from .settings import Settings

# Load environment variables
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_directories(root: Path, state_dir_name: str = ".resilient_write") -> Dict[str, Path]:
    """
    Create the server's state directories under the workspace root
    """
    state_dir = root / state_dir_name

    directories = {
        'state': state_dir,
        'chunks': state_dir / 'chunks',
        'scratch': state_dir / 'scratch',
        'handoffs': state_dir / 'handoffs',
    }

    for path in directories.values():
        path.mkdir(parents=True, exist_ok=True)

    return directories


def setup_logging(settings: Settings) -> None:
    """
    Configure logging. Stdout carries the protocol, so records go to stderr.
    """
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.LOG_FILE:
        handlers.append(logging.FileHandler(settings.LOG_FILE))

    logging.basicConfig(
        format=LOG_FORMAT,
        level=settings.LOG_LEVEL,
        handlers=handlers,
        force=True,
    )
