"""Lean toolchain interaction: compile checks, diagnostic parsing, unknown
identifier extraction, the symbolic tactic cascade, and a table-driven mock
verifier for desk-scale tests.

Live checks invoke the compiler as a fresh subprocess per source file; a
digest-keyed cache collapses repeated checks of identical source.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

TACTIC_CASCADE = ("simp", "aesop", "nlinarith", "ring", "norm_num")

DEFAULT_LEAN_VERSION = "4.23.0"


class LeanEnvironmentError(Exception):
    """Toolchain missing or misconfigured; distinct from verification failure."""


class MissingVerdictError(Exception):
    """Mock verifier table has no entry for the source digest."""


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # error | warning | info
    line: int
    column: int
    message: str

    def __post_init__(self) -> None:
        if self.line < 0 or self.column < 0:
            raise ValueError("diagnostic position must be non-negative")

    def to_dict(self) -> dict:
        return {"severity": self.severity, "line": self.line,
                "column": self.column, "message": self.message}

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostic":
        return cls(severity=data["severity"], line=data["line"],
                   column=data["column"], message=data["message"])


@dataclass(frozen=True)
class LeanVerdict:
    success: bool
    diagnostics: tuple[Diagnostic, ...] = ()
    elapsed_s: float = 0.0
    timed_out: bool = False

    def __post_init__(self) -> None:
        if self.success and any(d.severity == "error" for d in self.diagnostics):
            raise ValueError("successful verdict carries error diagnostics")
        if self.timed_out and self.success:
            raise ValueError("timed-out verdict cannot be successful")

    def to_dict(self) -> dict:
        return {"success": self.success,
                "diagnostics": [d.to_dict() for d in self.diagnostics],
                "elapsed_s": self.elapsed_s, "timed_out": self.timed_out}

    @classmethod
    def from_dict(cls, data: dict) -> "LeanVerdict":
        return cls(success=data["success"],
                   diagnostics=tuple(Diagnostic.from_dict(d)
                                     for d in data.get("diagnostics", [])),
                   elapsed_s=data.get("elapsed_s", 0.0),
                   timed_out=data.get("timed_out", False))


def source_digest(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


_DIAG_LINE_RE = re.compile(
    r"^(?:[^:\n]+:)?(?P<line>\d+):(?P<col>\d+):\s*(?P<sev>error|warning|info):\s*(?P<msg>.*)$"
)


def parse_diagnostics(output: str) -> tuple[Diagnostic, ...]:
    """Parse the compiler's line-oriented `file:line:col: severity: message`
    format. Continuation lines attach to the previous diagnostic; output that
    matches nothing degrades to a single `unparsed output` info diagnostic.
    """
    diags: list[Diagnostic] = []
    current: dict | None = None
    for line in output.splitlines():
        m = _DIAG_LINE_RE.match(line)
        if m:
            if current is not None:
                diags.append(Diagnostic(**current))
            current = {
                "severity": m.group("sev"),
                "line": int(m.group("line")),
                "column": int(m.group("col")),
                "message": m.group("msg"),
            }
        elif current is not None:
            current["message"] += "\n" + line
    if current is not None:
        diags.append(Diagnostic(**current))
    if not diags and output.strip():
        diags.append(Diagnostic(severity="info", line=0, column=0,
                                message="unparsed output: " + output.strip()))
    return tuple(diags)


_UNKNOWN_ID_RE = re.compile(r"[Uu]nknown (?:identifier|constant)\s+'([^']+)'")


def extract_unknown_identifiers(diagnostics: tuple[Diagnostic, ...] | list[Diagnostic]) -> list[str]:
    """Identifiers quoted in unknown-identifier/unknown-constant messages,
    deduplicated in first-occurrence order."""
    seen: dict[str, None] = {}
    for diag in diagnostics:
        for name in _UNKNOWN_ID_RE.findall(diag.message):
            seen.setdefault(name)
    return list(seen)


class Verifier(Protocol):
    def check(self, source: str, timeout_s: float) -> LeanVerdict: ...


class LeanCliVerifier:
    """Fresh compiler invocation per check on a single-file project pinned to
    a fixed Lean version."""

    def __init__(self, toolchain_root: str | None = None,
                 version: str = DEFAULT_LEAN_VERSION,
                 command: tuple[str, ...] = ("lean",)):
        self.toolchain_root = toolchain_root
        self.version = version
        self.command = command

    def available(self) -> bool:
        try:
            subprocess.run([*self.command, "--version"], capture_output=True,
                           timeout=30, cwd=self.toolchain_root)
            return True
        except (FileNotFoundError, subprocess.TimeoutExpired, OSError):
            return False

    def check(self, source: str, timeout_s: float) -> LeanVerdict:
        if not self.available():
            raise LeanEnvironmentError(
                f"lean toolchain {self.command[0]!r} not available"
            )
        start = time.monotonic()
        with tempfile.NamedTemporaryFile("w", suffix=".lean", delete=False,
                                         encoding="utf-8") as fh:
            fh.write(source)
            path = fh.name
        try:
            proc = subprocess.run([*self.command, path], capture_output=True,
                                  text=True, timeout=timeout_s,
                                  cwd=self.toolchain_root)
        except subprocess.TimeoutExpired:
            return LeanVerdict(success=False, diagnostics=(),
                               elapsed_s=time.monotonic() - start, timed_out=True)
        finally:
            os.unlink(path)
        elapsed = time.monotonic() - start
        diags = parse_diagnostics(proc.stdout + "\n" + proc.stderr)
        success = proc.returncode == 0 and not any(
            d.severity == "error" for d in diags)
        if not success:
            # a nonzero exit with unparsed output still needs an error entry
            if not any(d.severity == "error" for d in diags):
                diags = diags + (Diagnostic(severity="error", line=0, column=0,
                                            message=f"compiler exited with {proc.returncode}"),)
        return LeanVerdict(success=success, diagnostics=diags, elapsed_s=elapsed)


class MockVerifier:
    """Verifier answering from a digest-keyed table; missing entries raise
    an explicit error rather than failing silently.

    Table format: JSON mapping source digest to
    `{success, diagnostics, elapsed_s?, timed_out?, winning_tactic?}`.
    """

    def __init__(self, table: dict[str, dict]):
        self.table = table

    @classmethod
    def from_file(cls, path: str) -> "MockVerifier":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def check(self, source: str, timeout_s: float) -> LeanVerdict:
        digest = source_digest(source)
        entry = self.table.get(digest)
        if entry is None:
            raise MissingVerdictError(
                f"mock verifier has no verdict for source digest {digest}"
            )
        return LeanVerdict.from_dict(entry)


class RecordingVerifier:
    """Runs checks through an inner verifier and persists verdicts into a
    mock-table JSON file, so a live run can seed a replay table."""

    def __init__(self, inner: Verifier, table_path: str):
        self.inner = inner
        self.table_path = table_path
        self._table: dict[str, dict] = {}
        if os.path.exists(table_path):
            with open(table_path, encoding="utf-8") as fh:
                self._table = json.load(fh)

    def check(self, source: str, timeout_s: float) -> LeanVerdict:
        verdict = self.inner.check(source, timeout_s)
        self._table[source_digest(source)] = verdict.to_dict()
        with open(self.table_path, "w", encoding="utf-8") as fh:
            json.dump(self._table, fh, ensure_ascii=False, indent=2,
                      sort_keys=True)
        return verdict


class CachingVerifier:
    """Digest-keyed verdict cache around any verifier; identical sources in
    one run invoke the toolchain once. Safe for concurrent use."""

    def __init__(self, inner: Verifier):
        self.inner = inner
        self._cache: dict[str, LeanVerdict] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def check(self, source: str, timeout_s: float) -> LeanVerdict:
        digest = source_digest(source)
        with self._lock:
            if digest in self._cache:
                self.hits += 1
                return self._cache[digest]
        verdict = self.inner.check(source, timeout_s)
        with self._lock:
            self.misses += 1
            self._cache[digest] = verdict  # last writer wins on identical keys
        return verdict


_SORRY_RE = re.compile(r"\bsorry\b")


@dataclass
class CascadeOutcome:
    verdict: LeanVerdict
    winning_tactic: str | None
    attempts: list[tuple[str, bool]] = field(default_factory=list)


def fill_proof_hole(goal_source: str, proof: str) -> str:
    """Replace the single `sorry` hole with a proof term or tactic text."""
    holes = _SORRY_RE.findall(goal_source)
    if len(holes) != 1:
        raise ValueError(f"expected exactly one proof hole, found {len(holes)}")
    return _SORRY_RE.sub(lambda _: proof, goal_source, count=1)


def cascade_prove(goal_source: str, verifier: Verifier, timeout_s: float,
                  tactics: tuple[str, ...] = TACTIC_CASCADE,
                  chained: bool = False) -> CascadeOutcome:
    """Try each cascade tactic as a complete proof of the goal's hole, in the
    fixed order, stopping at the first success.

    With `chained=True` a single attempt chains all tactics instead
    (`simp; aesop; ...`).
    """
    if chained:
        tactics = ("; ".join(tactics),)
    attempts: list[tuple[str, bool]] = []
    last = LeanVerdict(success=False)
    for tactic in tactics:
        attempt_source = fill_proof_hole(goal_source, tactic)
        verdict = verifier.check(attempt_source, timeout_s)
        attempts.append((tactic, verdict.success))
        last = verdict
        if verdict.success:
            return CascadeOutcome(verdict=verdict, winning_tactic=tactic,
                                  attempts=attempts)
    return CascadeOutcome(verdict=last, winning_tactic=None, attempts=attempts)
