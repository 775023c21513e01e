import hashlib
import json
import logging
from typing import Any, Dict, Optional, Tuple

from pydantic import ValidationError

from layers.context import WorkspaceContext
from layers.envelope import (
    ErrorKind,
    ReasonHint,
    RetryKey,
    SuggestedAction,
    ToolError,
    error_from_exception,
)

from .endpoints import ToolRouter, router as default_router

logger = logging.getLogger(__name__)

JSONRPC_VERSION = "2.0"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

_PATH_ARGS = ("path", "session_id", "sha256", "label")


def rpc_result(msg_id: Any, result: Dict[str, Any]) -> Dict[str, Any]:
    return {"jsonrpc": JSONRPC_VERSION, "id": msg_id, "result": result}


def rpc_error(msg_id: Any, code: int, message: str, data: Any = None) -> Dict[str, Any]:
    error: Dict[str, Any] = {"code": code, "message": message}
    if data is not None:
        error["data"] = data
    return {"jsonrpc": JSONRPC_VERSION, "id": msg_id, "error": error}


def retry_key(tool: str, arguments: Dict[str, Any]) -> RetryKey:
    """(tool, target, content hash); retry_budget itself never changes the key"""
    target = ""
    for name in _PATH_ARGS:
        value = arguments.get(name)
        if isinstance(value, str):
            target = value
            break
    content = arguments.get("content")
    if isinstance(content, str):
        material = content
    else:
        rest = {k: v for k, v in arguments.items() if k != "retry_budget"}
        material = json.dumps(rest, sort_keys=True, default=str)
    return tool, target, hashlib.sha256(material.encode("utf-8", errors="replace")).hexdigest()


def _caller_budget(arguments: Dict[str, Any]) -> Optional[int]:
    value = arguments.get("retry_budget")
    if isinstance(value, int) and not isinstance(value, bool) and value >= 1:
        return value
    return None


def _validation_error(e: ValidationError) -> ToolError:
    errors = [
        {"loc": ".".join(map(str, err["loc"])) or "<root>", "msg": err["msg"]}
        for err in e.errors()
    ]
    return ToolError(
        ErrorKind.POLICY_VIOLATION,
        ReasonHint.UNKNOWN,
        "Arguments do not match the tool schema",
        suggested_action=SuggestedAction.FIX_ARGS,
        context={"errors": errors},
    )


class UnknownTool(LookupError):
    pass


class RequestHandler:
    def __init__(self, ctx: WorkspaceContext, tools: ToolRouter = default_router):
        """Bind the tool catalog to an opened workspace"""
        self.ctx = ctx
        self.tools = tools
        self.settings = ctx.settings

    def dispatch(self, name: str, arguments: Dict[str, Any]) -> Tuple[Dict[str, Any], bool]:
        """Run one tool call; returns (body, is_error). Never raises for tool failures."""
        descriptor = self.tools.get(name)
        if descriptor is None:
            raise UnknownTool(name)

        key = retry_key(name, arguments)
        try:
            request = descriptor.args_model.model_validate(arguments)
            body = descriptor.handler(self.ctx, request)
            self.ctx.ledger.clear(key)
            logger.debug(f"{name} succeeded")
            return body, False
        except ValidationError as e:
            failure = _validation_error(e)
        except ToolError as e:
            failure = e
        except Exception as e:
            logger.error(f"Internal error in {name}: {str(e)}", exc_info=True)
            failure = ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.UNKNOWN,
                f"Internal error while running {name}",
                suggested_action=SuggestedAction.FIX_ARGS,
                context={"detail": f"{type(e).__name__}: {e}"},
            )

        budget = self.ctx.ledger.charge(key, self.ctx.policy.retry_budget_default, _caller_budget(arguments))
        envelope = error_from_exception(failure, budget)
        logger.info(f"{name} failed: {envelope.error}/{envelope.reason_hint} (retry_budget {budget})")
        return envelope.model_dump(), True

    def call_tool(self, name: str, arguments: Dict[str, Any]) -> Dict[str, Any]:
        """MCP tools/call result shape"""
        body, is_error = self.dispatch(name, arguments)
        return {
            "content": [{"type": "text", "text": json.dumps(body, sort_keys=True, ensure_ascii=False)}],
            "structuredContent": body,
            "isError": is_error,
        }

    def initialize(self, params: Dict[str, Any]) -> Dict[str, Any]:
        client = params.get("clientInfo") or {}
        if isinstance(client, dict) and isinstance(client.get("name"), str):
            self.ctx.caller = client["name"]
            logger.info(f"Client connected: {client['name']}")
        return {
            "protocolVersion": self.settings.PROTOCOL_VERSION,
            "capabilities": {"tools": {"listChanged": False}},
            "serverInfo": {"name": self.settings.SERVER_NAME, "version": self.settings.SERVER_VERSION},
        }

    def handle_message(self, msg: Any) -> Optional[Dict[str, Any]]:
        """Answer one decoded JSON-RPC message; notifications yield None"""
        if isinstance(msg, list):
            return rpc_error(None, INVALID_REQUEST, "Batch requests are not supported")
        if not isinstance(msg, dict):
            return rpc_error(None, INVALID_REQUEST, "Request must be a JSON object")

        is_notification = "id" not in msg
        msg_id = msg.get("id")
        if not (msg_id is None or isinstance(msg_id, (str, int))) or isinstance(msg_id, bool):
            return rpc_error(None, INVALID_REQUEST, "Invalid id")
        method = msg.get("method")
        if msg.get("jsonrpc") != JSONRPC_VERSION or not isinstance(method, str):
            return rpc_error(msg_id, INVALID_REQUEST, "Invalid JSON-RPC 2.0 request")

        params = msg.get("params", {})
        if params is None:
            params = {}
        if not isinstance(params, dict):
            return None if is_notification else rpc_error(msg_id, INVALID_PARAMS, "params must be an object")

        try:
            result = self._route(method, params)
        except UnknownTool as e:
            response = rpc_error(msg_id, INVALID_PARAMS, f"Unknown tool: {e.args[0]}")
        except LookupError:
            response = rpc_error(msg_id, METHOD_NOT_FOUND, f"Method not found: {method}")
        except ValueError as e:
            response = rpc_error(msg_id, INVALID_PARAMS, str(e))
        except Exception as e:
            logger.error(f"Error handling {method}: {str(e)}", exc_info=True)
            response = rpc_error(msg_id, INTERNAL_ERROR, "Internal error", {"detail": str(e)})
        else:
            response = None if result is None else rpc_result(msg_id, result)

        if is_notification:
            return None
        return response if response is not None else rpc_result(msg_id, {})

    def _route(self, method: str, params: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        if method == "initialize":
            return self.initialize(params)
        if method == "ping":
            return {}
        if method.startswith("notifications/"):
            return None
        if method == "tools/list":
            return {"tools": [d.to_dict() for d in self.tools.list_tools()]}
        if method == "tools/call":
            name = params.get("name")
            arguments = params.get("arguments") or {}
            if not isinstance(name, str):
                raise ValueError("tools/call requires a string 'name'")
            if not isinstance(arguments, dict):
                raise ValueError("tools/call 'arguments' must be an object")
            return self.call_tool(name, arguments)
        raise LookupError(method)
