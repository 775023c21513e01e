from .runner import ScriptResult, ServerProcess, SessionScript, run_script

__all__ = ["ScriptResult", "ServerProcess", "SessionScript", "run_script"]
