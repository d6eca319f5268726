"""Client side of the enumeration sandbox contract.

The runner itself is a separate executable: it reads one JSON request on
stdin and writes one JSON result on stdout (schema version 1). This module
holds the request/result types, a subprocess client, and record/replay
implementations that keep the pipeline deterministic in tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
from dataclasses import dataclass
from typing import Protocol

SCHEMA_VERSION = 1

DEFAULT_TIMEOUT_S = 60.0
DEFAULT_MAX_ANSWERS = 100
DEFAULT_MAX_OUTPUT_BYTES = 1 << 20
DEFAULT_MEMORY_MB = 512


class SandboxError(Exception):
    pass


class MissingSandboxFixtureError(SandboxError):
    pass


@dataclass(frozen=True)
class SandboxRequest:
    source: str
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_answers: int = DEFAULT_MAX_ANSWERS
    max_output_bytes: int = DEFAULT_MAX_OUTPUT_BYTES
    memory_mb: int = DEFAULT_MEMORY_MB

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_answers < 1:
            raise ValueError("max_answers must be >= 1")

    def to_dict(self) -> dict:
        return {"v": SCHEMA_VERSION, "source": self.source,
                "timeout_s": self.timeout_s, "max_answers": self.max_answers,
                "max_output_bytes": self.max_output_bytes,
                "memory_mb": self.memory_mb}

    @classmethod
    def from_dict(cls, data: dict) -> "SandboxRequest":
        return cls(source=data["source"],
                   timeout_s=data.get("timeout_s", DEFAULT_TIMEOUT_S),
                   max_answers=data.get("max_answers", DEFAULT_MAX_ANSWERS),
                   max_output_bytes=data.get("max_output_bytes",
                                             DEFAULT_MAX_OUTPUT_BYTES),
                   memory_mb=data.get("memory_mb", DEFAULT_MEMORY_MB))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SandboxResult:
    status: str  # ok | timeout | runtime_error | output_overflow
    answers: tuple[str, ...] = ()
    truncated: bool = False
    stderr_excerpt: str = ""
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {"v": SCHEMA_VERSION, "status": self.status,
                "answers": list(self.answers), "truncated": self.truncated,
                "stderr_excerpt": self.stderr_excerpt,
                "wall_time_s": self.wall_time_s}

    @classmethod
    def from_dict(cls, data: dict) -> "SandboxResult":
        return cls(status=data["status"], answers=tuple(data.get("answers", [])),
                   truncated=data.get("truncated", False),
                   stderr_excerpt=data.get("stderr_excerpt", ""),
                   wall_time_s=data.get("wall_time_s", 0.0))


class Sandbox(Protocol):
    def run(self, request: SandboxRequest) -> SandboxResult: ...


class SubprocessSandbox:
    """Invokes the external runner over the stdin/stdout JSON protocol."""

    def __init__(self, command: tuple[str, ...] | None = None):
        if command is None:
            env_cmd = os.environ.get("ECP_SANDBOX_CMD", "sandbox-runner")
            command = tuple(env_cmd.split())
        self.command = command

    def run(self, request: SandboxRequest) -> SandboxResult:
        try:
            proc = subprocess.run(
                list(self.command),
                input=json.dumps(request.to_dict()),
                capture_output=True, text=True,
                timeout=request.timeout_s + 30,
            )
        except FileNotFoundError as exc:
            raise SandboxError(f"sandbox runner not found: {self.command}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SandboxError("sandbox runner did not respond") from exc
        if proc.returncode == 2:
            raise SandboxError(f"malformed sandbox request: {proc.stderr.strip()}")
        if proc.returncode != 0:
            raise SandboxError(
                f"sandbox runner internal fault (exit {proc.returncode}): "
                f"{proc.stderr.strip()[:500]}"
            )
        try:
            return SandboxResult.from_dict(json.loads(proc.stdout))
        except (json.JSONDecodeError, KeyError) as exc:
            raise SandboxError(f"unparseable sandbox result: {exc}") from exc


class ReplaySandbox:
    """Answers requests from a directory of `<digest>.json` fixture files."""

    def __init__(self, root: str):
        self.root = root

    def run(self, request: SandboxRequest) -> SandboxResult:
        path = os.path.join(self.root, f"{request.digest()}.json")
        if not os.path.exists(path):
            raise MissingSandboxFixtureError(
                f"no sandbox fixture for request digest {request.digest()}"
            )
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        return SandboxResult.from_dict(entry["result"])


class RecordingSandbox:
    """Runs requests through an inner sandbox and persists the results."""

    def __init__(self, inner: Sandbox, root: str):
        self.inner = inner
        self.root = root

    def run(self, request: SandboxRequest) -> SandboxResult:
        result = self.inner.run(request)
        os.makedirs(self.root, exist_ok=True)
        path = os.path.join(self.root, f"{request.digest()}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"request": request.to_dict(), "result": result.to_dict()},
                      fh, ensure_ascii=False, indent=2, sort_keys=True)
        return result
