import json
import logging
from typing import Any, BinaryIO, Dict

from .request_handler import INVALID_REQUEST, PARSE_ERROR, RequestHandler, rpc_error

logger = logging.getLogger(__name__)


def write_message(output: BinaryIO, message: Dict[str, Any]) -> None:
    """One JSON object per line"""
    line = json.dumps(message, ensure_ascii=False, separators=(",", ":")) + "\n"
    output.write(line.encode("utf-8"))
    output.flush()


def _drain_frame(stream: BinaryIO, cap: int) -> None:
    while True:
        rest = stream.readline(cap + 1)
        if not rest or rest.endswith(b"\n"):
            return


def serve(handler: RequestHandler, input: BinaryIO, output: BinaryIO, max_frame_bytes: int) -> int:
    """Newline-delimited JSON-RPC loop; returns the exit status at EOF"""
    settings = handler.settings
    logger.info(f"{settings.SERVER_NAME} {settings.SERVER_VERSION} starting up...")
    while True:
        line = input.readline(max_frame_bytes + 1)
        if not line:
            break

        if len(line) > max_frame_bytes and not line.endswith(b"\n"):
            _drain_frame(input, max_frame_bytes)
            logger.warning(f"Rejected frame larger than {max_frame_bytes} bytes")
            write_message(output, rpc_error(
                None,
                INVALID_REQUEST,
                f"Frame exceeds {max_frame_bytes} bytes; use rw.chunk_write for large content",
            ))
            continue

        if not line.strip():
            continue

        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            logger.warning(f"Parse error: {str(e)}")
            write_message(output, rpc_error(None, PARSE_ERROR, "Parse error"))
            continue

        response = handler.handle_message(msg)
        if response is not None:
            write_message(output, response)

    logger.info(f"{settings.SERVER_NAME} shutting down...")
    return 0
