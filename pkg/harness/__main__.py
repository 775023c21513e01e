import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config.env import setup_logging
from config.settings import get_settings

from .runner import SessionScript, run_script

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="python -m harness", description="Run scripted rw-server sessions")
    parser.add_argument("--script", type=Path, action="append", help="Script JSON file (repeatable)")
    parser.add_argument("--all", action="store_true", help="Run every script under harness/fixtures")
    parser.add_argument("--verbose", action="store_true", help="Include transcripts in the output")
    args = parser.parse_args(argv)

    setup_logging(get_settings())
    scripts = list(args.script or [])
    if args.all:
        scripts.extend(sorted(FIXTURES_DIR.glob("*.json")))
    if not scripts:
        parser.error("pass --script <file> or --all")

    passed = True
    for path in scripts:
        result = run_script(SessionScript.load(path))
        report = result.to_dict()
        if not args.verbose:
            report.pop("transcript")
        print(json.dumps(report, indent=2, sort_keys=True))
        passed = passed and result.passed
    logging.getLogger(__name__).info(f"{len(scripts)} script(s), {'all passed' if passed else 'failures'}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
