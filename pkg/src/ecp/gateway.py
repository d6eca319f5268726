"""Chat-completion backends with tool-calling transcripts and record/replay.

Every pipeline stage talks to a model through the `Backend` protocol. The
`ReplayBackend` answers from a directory of digest-keyed fixture files so the
whole pipeline runs deterministically with zero network use; `RecordingBackend`
wraps any backend and persists its replies into the same store.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol

REGISTERED_TOOLS = ("run_enumeration", "check_lean")


class GatewayError(Exception):
    """Base class for backend failures."""


class MissingFixtureError(GatewayError):
    """Replay store has no entry for the request digest."""


class FixtureCollisionError(GatewayError):
    """Two distinct requests hash to the same digest file."""


class TransportError(GatewayError):
    """Live transport failure after retries."""


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: str
    call_id: str

    def __post_init__(self) -> None:
        if self.tool not in REGISTERED_TOOLS:
            raise ValueError(f"unregistered tool {self.tool!r}")

    def to_dict(self) -> dict:
        return {"tool": self.tool, "arguments": self.arguments, "call_id": self.call_id}

    @classmethod
    def from_dict(cls, data: dict) -> "ToolCall":
        return cls(tool=data["tool"], arguments=data["arguments"],
                   call_id=data["call_id"])


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant | tool
    content: str
    tool_call: ToolCall | None = None
    tool_call_id: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant", "tool"):
            raise ValueError(f"bad role {self.role!r}")
        if self.role == "tool" and self.tool_call_id is None:
            raise ValueError("tool message requires tool_call_id")
        if self.tool_call is not None and self.role != "assistant":
            raise ValueError("only assistant messages may carry a tool call")

    def to_dict(self) -> dict:
        d: dict = {"role": self.role, "content": self.content}
        if self.tool_call is not None:
            d["tool_call"] = self.tool_call.to_dict()
        if self.tool_call_id is not None:
            d["tool_call_id"] = self.tool_call_id
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ChatMessage":
        tc = data.get("tool_call")
        return cls(
            role=data["role"],
            content=data["content"],
            tool_call=ToolCall.from_dict(tc) if tc else None,
            tool_call_id=data.get("tool_call_id"),
        )


@dataclass(frozen=True)
class BackendConfig:
    model_id: str
    temperature: float = 1.0
    top_p: float = 0.95
    max_tokens: int = 4096
    reasoning_effort: str | None = None  # none | medium

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "reasoning_effort": self.reasoning_effort,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        return cls(
            model_id=data["model_id"],
            temperature=data.get("temperature", 1.0),
            top_p=data.get("top_p", 0.95),
            max_tokens=data.get("max_tokens", 4096),
            reasoning_effort=data.get("reasoning_effort"),
        )


@dataclass(frozen=True)
class Transcript:
    messages: tuple[ChatMessage, ...]
    finished: bool
    finish_reason: str  # natural | tool_budget | token_budget | error

    def to_dict(self) -> dict:
        return {
            "messages": [m.to_dict() for m in self.messages],
            "finished": self.finished,
            "finish_reason": self.finish_reason,
        }


def validate_transcript(messages: Iterable[ChatMessage]) -> None:
    """Enforce transcript well-formedness: each tool response immediately
    follows its tool call, and no prefix has more than one unanswered call."""
    pending: ToolCall | None = None
    for msg in messages:
        if pending is not None:
            if msg.role != "tool" or msg.tool_call_id != pending.call_id:
                raise ValueError(
                    f"tool call {pending.call_id!r} not answered by next message"
                )
            pending = None
        elif msg.role == "tool":
            raise ValueError("tool response without a preceding tool call")
        if msg.tool_call is not None:
            pending = msg.tool_call
    if pending is not None:
        raise ValueError(f"unanswered tool call {pending.call_id!r}")


class Backend(Protocol):
    def complete(self, messages: list[ChatMessage], config: BackendConfig,
                 tag: str | None = None) -> ChatMessage:
        """Return one assistant message. `tag` distinguishes otherwise
        identical requests (e.g. independent proof samples) in fixtures."""
        ...


def request_digest(messages: list[ChatMessage], config: BackendConfig,
                   tag: str | None = None) -> str:
    """Stable content digest of a canonicalized request.

    Config fields are serialized with sorted keys; prompt text is
    byte-significant (no whitespace normalization).
    """
    payload = {
        "messages": [m.to_dict() for m in messages],
        "config": config.to_dict(),
    }
    if tag is not None:
        payload["tag"] = tag
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class FixtureStore:
    """Directory of `<digest>.json` files, each `{request, reply, meta}`."""

    def __init__(self, root: str):
        self.root = root

    def _path(self, digest: str) -> str:
        return os.path.join(self.root, f"{digest}.json")

    def record(self, digest: str, request: dict, reply: ChatMessage,
               meta: dict | None = None) -> None:
        os.makedirs(self.root, exist_ok=True)
        path = self._path(digest)
        entry = {"request": request, "reply": reply.to_dict(), "meta": meta or {}}
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                existing = json.load(fh)
            if existing["request"] != request:
                raise FixtureCollisionError(
                    f"digest {digest} already stores a different request"
                )
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False, indent=2, sort_keys=True)

    def lookup(self, digest: str) -> ChatMessage:
        path = self._path(digest)
        if not os.path.exists(path):
            raise MissingFixtureError(f"no fixture for request digest {digest}")
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        return ChatMessage.from_dict(entry["reply"])

    def __contains__(self, digest: str) -> bool:
        return os.path.exists(self._path(digest))


class ReplayBackend:
    """Answers every request from a fixture store; performs no network I/O."""

    def __init__(self, store: FixtureStore):
        self.store = store

    def complete(self, messages: list[ChatMessage], config: BackendConfig,
                 tag: str | None = None) -> ChatMessage:
        return self.store.lookup(request_digest(messages, config, tag))


class RecordingBackend:
    """Wraps a backend and persists each (request, reply) into a store."""

    def __init__(self, inner: Backend, store: FixtureStore):
        self.inner = inner
        self.store = store

    def complete(self, messages: list[ChatMessage], config: BackendConfig,
                 tag: str | None = None) -> ChatMessage:
        reply = self.inner.complete(messages, config, tag)
        digest = request_digest(messages, config, tag)
        request = {
            "messages": [m.to_dict() for m in messages],
            "config": config.to_dict(),
            "tag": tag,
        }
        self.store.record(digest, request, reply,
                          meta={"model_id": config.model_id,
                                "recorded_at": time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                                             time.gmtime())})
        return reply


class ScriptedBackend:
    """Test backend that replays a fixed sequence of assistant replies, or
    delegates to a callable of (messages, config, tag)."""

    def __init__(self, script: Iterable[ChatMessage] | Callable | None = None):
        self._fn = script if callable(script) else None
        self._queue = list(script) if script is not None and not callable(script) else []
        self.calls = 0

    def complete(self, messages: list[ChatMessage], config: BackendConfig,
                 tag: str | None = None) -> ChatMessage:
        self.calls += 1
        if self._fn is not None:
            return self._fn(messages, config, tag)
        if not self._queue:
            raise GatewayError("scripted backend exhausted")
        return self._queue.pop(0)


class FailingBackend:
    """Injected transport that fails on use; asserts replay performs no I/O."""

    def complete(self, messages: list[ChatMessage], config: BackendConfig,
                 tag: str | None = None) -> ChatMessage:
        raise AssertionError("network transport used in replay mode")


_REDACT_RE = re.compile(r"(sk-|key-)[A-Za-z0-9_\-]{8,}")


def redact(text: str) -> str:
    return _REDACT_RE.sub(r"\1[REDACTED]", text)


class LiveBackend:
    """OpenAI-compatible chat-completions client.

    Credentials come only from `ECP_API_KEY_<PROVIDER>`. Up to 3 transport
    retries with exponential backoff; HTTP 4xx is not retried.
    """

    def __init__(self, provider: str, base_url: str,
                 max_retries: int = 3, backoff_s: float = 1.0):
        self.provider = provider
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    def _api_key(self) -> str:
        var = f"ECP_API_KEY_{self.provider.upper()}"
        key = os.environ.get(var)
        if not key:
            raise GatewayError(f"missing API key env var {var}")
        return key

    def complete(self, messages: list[ChatMessage], config: BackendConfig,
                 tag: str | None = None) -> ChatMessage:
        import requests

        payload = {
            "model": config.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
        }
        if config.reasoning_effort and config.reasoning_effort != "none":
            payload["reasoning_effort"] = config.reasoning_effort
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = requests.post(f"{self.base_url}/chat/completions",
                                     json=payload, headers=headers, timeout=300)
                if 400 <= resp.status_code < 500:
                    raise GatewayError(
                        f"backend rejected request: HTTP {resp.status_code}: "
                        f"{redact(resp.text[:500])}"
                    )
                resp.raise_for_status()
                body = resp.json()
                content = body["choices"][0]["message"]["content"]
                return ChatMessage(role="assistant", content=content or "")
            except GatewayError:
                raise
            except Exception as exc:  # transport / parse failure, retryable
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2 ** attempt))
        raise TransportError(f"transport failed after retries: {redact(str(last_error))}")


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_fenced_blocks(text: str) -> list[str]:
    """Bodies of all fenced code blocks, in order."""
    return [m.group(1) for m in _FENCE_RE.finditer(text)]


def last_fenced_block(text: str) -> str | None:
    blocks = extract_fenced_blocks(text)
    return blocks[-1] if blocks else None


@dataclass
class ToolLoopResult:
    transcript: Transcript
    tool_rounds: int


def run_tool_loop(system_prompt: str, task_prompt: str,
                  tools: dict[str, Callable[[str], str]],
                  backend: Backend, config: BackendConfig,
                  max_turns: int = 8,
                  fallback_tool: str | None = None,
                  tag_prefix: str | None = None) -> Transcript:
    """Alternate model replies and tool executions until the model stops
    calling tools or `max_turns` tool rounds are spent.

    When a reply has no structured tool call but contains a fenced code block
    and `fallback_tool` is set, the last block is treated as a call to that
    tool.
    """
    if max_turns < 1:
        raise ValueError("max_turns must be >= 1")
    messages: list[ChatMessage] = [
        ChatMessage(role="system", content=system_prompt),
        ChatMessage(role="user", content=task_prompt),
    ]
    finish_reason = "natural"
    rounds = 0
    while True:
        tag = f"{tag_prefix}:{rounds}" if tag_prefix else None
        try:
            reply = backend.complete(messages, config, tag=tag)
        except GatewayError:
            partial = Transcript(messages=tuple(messages), finished=False,
                                 finish_reason="error")
            raise ToolLoopError(partial)
        call = reply.tool_call
        if call is None and fallback_tool is not None:
            block = last_fenced_block(reply.content)
            if block is not None:
                call = ToolCall(tool=fallback_tool, arguments=block,
                                call_id=f"fallback-{rounds}")
                reply = replace(reply, tool_call=call)
        messages.append(reply)
        if call is None:
            break
        if call.tool not in tools:
            raise GatewayError(f"model called unknown tool {call.tool!r}")
        response = tools[call.tool](call.arguments)
        messages.append(ChatMessage(role="tool", content=response,
                                    tool_call_id=call.call_id))
        rounds += 1
        if rounds >= max_turns:
            finish_reason = "tool_budget"
            break
    transcript = Transcript(messages=tuple(messages), finished=True,
                            finish_reason=finish_reason)
    validate_transcript(transcript.messages)
    return transcript


class ToolLoopError(GatewayError):
    """Backend failure inside a tool loop; carries the partial transcript."""

    def __init__(self, partial: Transcript):
        super().__init__("backend failure during tool loop")
        self.partial = partial
