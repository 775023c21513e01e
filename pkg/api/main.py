import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config.env import setup_logging
from config.settings import get_settings
from layers.context import WorkspaceContext
from layers.workspace import WorkspaceError, resolve_root

from .request_handler import RequestHandler, UnknownTool
from .server import serve

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rw-server",
        description="Durable-write MCP tool server over stdio",
    )
    parser.add_argument("--workspace", type=Path, help="Workspace root (overrides RW_WORKSPACE)")
    parser.add_argument(
        "--once",
        nargs=2,
        metavar=("TOOL", "JSON_ARGS"),
        help="Dispatch a single tool call, print the result and exit",
    )
    parser.add_argument("--log-level", help="Override LOG_LEVEL")
    return parser


def run_once(handler: RequestHandler, tool: str, raw_args: str) -> int:
    try:
        arguments = json.loads(raw_args)
    except json.JSONDecodeError as e:
        print(f"Invalid JSON arguments: {e}", file=sys.stderr)
        return 2
    if not isinstance(arguments, dict):
        print("JSON arguments must be an object", file=sys.stderr)
        return 2
    try:
        body, is_error = handler.dispatch(tool, arguments)
    except UnknownTool:
        print(f"Unknown tool: {tool}", file=sys.stderr)
        return 2
    print(json.dumps(body, indent=2, sort_keys=True, ensure_ascii=False))
    return 1 if is_error else 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    if args.log_level:
        settings.LOG_LEVEL = args.log_level.upper()
    setup_logging(settings)

    try:
        root = resolve_root(settings.RW_WORKSPACE, Path.cwd(), args.workspace)
        ctx = WorkspaceContext.open(root, settings)
    except WorkspaceError as e:
        print(f"rw-server: {e}", file=sys.stderr)
        return 2

    handler = RequestHandler(ctx)
    if args.once:
        return run_once(handler, *args.once)
    return serve(handler, sys.stdin.buffer, sys.stdout.buffer, settings.MAX_FRAME_BYTES)


if __name__ == "__main__":
    sys.exit(main())
