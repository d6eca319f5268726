"""Answer-construction task model and corpus I/O.

A task is a Lean theorem statement with a named answer placeholder declared
as an ``abbrev`` whose body is ``sorry``. Everything downstream (enumeration,
conjecturing, proving, equivalence checking) consumes this representation.

Source transformations here are textual, not AST-based: the placeholder
convention `abbrev <name> : T := sorry` is fixed, and substitution rewrites
only the declaration body span.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Iterable


class CorpusError(Exception):
    """Raised on schema violations in dataset records."""


class SubstitutionError(Exception):
    """Raised when the answer placeholder cannot be rewritten."""


class AnswerShape(enum.Enum):
    SINGLE_VALUE = "SingleValue"
    SINGLE_FUNCTION = "SingleFunction"
    SET_VALUED = "SetValued"
    SET_FUNCTION = "SetFunction"
    LEAST_OF = "LeastOf"
    GREATEST_OF = "GreatestOf"


@dataclass(frozen=True)
class ProblemMetadata:
    source: str = ""
    domain_tag: str = ""
    difficulty: str = ""
    created_after: str | None = None
    answer_type_tag: str = ""
    shape_override: str | None = None

    def __post_init__(self) -> None:
        if self.created_after is not None:
            try:
                date.fromisoformat(self.created_after)
            except ValueError as exc:
                raise CorpusError(
                    f"metadata.created_after is not an ISO date: {self.created_after!r}"
                ) from exc

    def created_after_date(self) -> date | None:
        if self.created_after is None:
            return None
        return date.fromisoformat(self.created_after)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "source": self.source,
            "domain": self.domain_tag,
            "difficulty": self.difficulty,
            "created_after": self.created_after,
            "answer_type_tag": self.answer_type_tag,
        }
        if self.shape_override is not None:
            d["shape"] = self.shape_override
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProblemMetadata":
        return cls(
            source=data.get("source", ""),
            domain_tag=data.get("domain", ""),
            difficulty=data.get("difficulty", ""),
            created_after=data.get("created_after"),
            answer_type_tag=data.get("answer_type_tag", ""),
            shape_override=data.get("shape"),
        )


# Matches `abbrev <name> : <type> := <body-start>` with optional modifiers.
_ABBREV_RE_TEMPLATE = r"(?:noncomputable\s+)?abbrev\s+{name}\s*:\s*"


def _find_placeholder(formal: str, answer_name: str) -> tuple[int, int, str, int, int]:
    """Locate the placeholder declaration.

    Returns (decl_start, body_start, type_text, body_end, decl_count) where
    [body_start, body_end) spans the declaration body after `:=`.
    """
    pattern = re.compile(_ABBREV_RE_TEMPLATE.format(name=re.escape(answer_name)))
    matches = list(pattern.finditer(formal))
    if not matches:
        raise SubstitutionError(f"no abbrev declaration named {answer_name!r}")
    if len(matches) > 1:
        raise SubstitutionError(f"multiple abbrev declarations named {answer_name!r}")
    m = matches[0]
    assign = formal.find(":=", m.end())
    if assign < 0:
        raise SubstitutionError(f"abbrev {answer_name!r} has no `:=` body")
    type_text = formal[m.end():assign].strip()
    body_start = assign + 2
    body_end = _body_end(formal, body_start)
    return m.start(), body_start, type_text, body_end, len(matches)


_DECL_KEYWORDS = ("theorem", "lemma", "def", "abbrev", "example", "noncomputable",
                  "instance", "structure", "open", "import", "namespace", "end")


def _body_end(formal: str, body_start: int) -> int:
    """End of a declaration body: runs to the first blank line or the next
    line that starts a new top-level declaration."""
    pos = body_start
    n = len(formal)
    while pos < n:
        nl = formal.find("\n", pos)
        if nl < 0:
            return n
        rest = formal[nl + 1:]
        stripped = rest.lstrip(" \t")
        if stripped.startswith("\n") or stripped == "":
            return nl
        first_word = stripped.split(None, 1)[0] if stripped.split() else ""
        if rest[:1] not in (" ", "\t") and first_word in _DECL_KEYWORDS:
            return nl
        pos = nl + 1
    return n


def extract_answer_body(formal: str, answer_name: str) -> str:
    """The current body text of the placeholder declaration, stripped."""
    _, body_start, _, body_end, _ = _find_placeholder(formal, answer_name)
    return formal[body_start:body_end].strip()


@dataclass(frozen=True)
class AnswerConstructionTask:
    """One formal answer-construction problem.

    ``formal_statement`` holds the full Lean source; ``answer_name`` names the
    placeholder ``abbrev`` whose body is ``sorry``; ``context_signature`` lists
    the theorem's leading binders (name, Lean type text).
    """

    id: str
    informal_statement: str
    formal_statement: str
    answer_name: str
    answer_type: str
    context_signature: tuple[tuple[str, str], ...] = ()
    answer_shape: AnswerShape = AnswerShape.SINGLE_VALUE
    ground_truth: str | None = None
    metadata: ProblemMetadata = field(default_factory=ProblemMetadata)

    def __post_init__(self) -> None:
        _find_placeholder(self.formal_statement, self.answer_name)
        goal = _strip_placeholder_decl(self.formal_statement, self.answer_name)
        if not re.search(rf"\b{re.escape(self.answer_name)}\b", goal):
            raise CorpusError(
                f"answer placeholder {self.answer_name!r} never occurs in the theorem"
            )


def _strip_placeholder_decl(formal: str, answer_name: str) -> str:
    decl_start, _, _, body_end, _ = _find_placeholder(formal, answer_name)
    return formal[:decl_start] + formal[body_end:]


def infer_answer_shape(answer_type: str, formal_statement: str,
                       override: str | None = None) -> AnswerShape:
    """Answer shape from the placeholder's type text and the theorem goal.

    A metadata override wins; otherwise `IsLeast`/`IsGreatest` in the goal
    mark optimality shapes, `Set` in the result type marks set-valuedness,
    and a top-level arrow marks a function answer.
    """
    if override is not None:
        return AnswerShape(override)
    if re.search(r"\bIsLeast\b", formal_statement):
        return AnswerShape.LEAST_OF
    if re.search(r"\bIsGreatest\b", formal_statement):
        return AnswerShape.GREATEST_OF
    t = answer_type.strip()
    has_arrow = "→" in t or "->" in t
    result = t.rsplit("→", 1)[-1].rsplit("->", 1)[-1].strip() if has_arrow else t
    is_set = result.startswith("Set ") or result.startswith("Set(")
    if has_arrow and is_set:
        return AnswerShape.SET_FUNCTION
    if is_set:
        return AnswerShape.SET_VALUED
    if has_arrow:
        return AnswerShape.SINGLE_FUNCTION
    return AnswerShape.SINGLE_VALUE


def parse_context_signature(formal_statement: str) -> tuple[tuple[str, str], ...]:
    """Leading explicit binders of the theorem declaration, as (name, type) pairs.

    Hypothesis binders (names starting with `h`) are kept too — consumers that
    want only value-level context variables can filter. Parenthesis matching is
    textual; this is a convention-level parser, not an elaborator.
    """
    m = re.search(r"\btheorem\s+\S+", formal_statement)
    if not m:
        return ()
    pos = m.end()
    out: list[tuple[str, str]] = []
    n = len(formal_statement)
    while pos < n:
        while pos < n and formal_statement[pos] in " \t\n":
            pos += 1
        if pos >= n or formal_statement[pos] != "(":
            break
        depth = 0
        start = pos
        while pos < n:
            c = formal_statement[pos]
            if c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
                if depth == 0:
                    pos += 1
                    break
            pos += 1
        group = formal_statement[start + 1:pos - 1]
        if ":" in group:
            names, type_text = group.split(":", 1)
            for name in names.split():
                out.append((name, type_text.strip()))
    return tuple(out)


@dataclass(frozen=True)
class CandidateAnswer:
    """A proposed closed-form answer expression with its provenance."""

    expression: str
    stage: str = ""
    model_id: str = ""
    attempt: int = 0
    compiled: str = "unknown"  # unknown | yes | no

    def __post_init__(self) -> None:
        if not self.expression.strip():
            raise ValueError("candidate expression is empty")
        if re.search(r"\bsorry\b", self.expression):
            raise ValueError("candidate expression contains `sorry`")


@dataclass(frozen=True)
class DatasetRecord:
    """One line of the JSONL corpus; `raw` preserves unknown fields."""

    task: AnswerConstructionTask
    informal_solution: str | None = None
    raw: dict[str, Any] = field(default_factory=dict, compare=False)


_REQUIRED_FIELDS = ("id", "informal", "formal", "answer_name", "answer_type")


def parse_record(line: str) -> DatasetRecord:
    """Parse one JSONL corpus line into a DatasetRecord."""
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise CorpusError("record is not a JSON object")
    for f in _REQUIRED_FIELDS:
        if f not in data:
            raise CorpusError(f"record missing required field {f!r}")
        if not isinstance(data[f], str):
            raise CorpusError(f"record field {f!r} is not a string")
    meta = ProblemMetadata.from_dict(data.get("metadata") or {})
    formal = data["formal"]
    task = AnswerConstructionTask(
        id=data["id"],
        informal_statement=data["informal"],
        formal_statement=formal,
        answer_name=data["answer_name"],
        answer_type=data["answer_type"],
        context_signature=parse_context_signature(formal),
        answer_shape=infer_answer_shape(data["answer_type"], formal,
                                        meta.shape_override),
        ground_truth=data.get("ground_truth"),
        metadata=meta,
    )
    return DatasetRecord(task=task, informal_solution=data.get("solution"), raw=data)


def serialize_record(record: DatasetRecord) -> str:
    """One JSONL line. Known fields are refreshed from the typed view; unknown
    fields from `raw` are carried through, preserving their original order."""
    data = dict(record.raw)
    task = record.task
    data["id"] = task.id
    data["informal"] = task.informal_statement
    data["formal"] = task.formal_statement
    data["answer_name"] = task.answer_name
    data["answer_type"] = task.answer_type
    data["ground_truth"] = task.ground_truth
    data["solution"] = record.informal_solution
    data["metadata"] = task.metadata.to_dict()
    if not record.raw:
        order = ["id", "informal", "formal", "answer_name", "answer_type",
                 "ground_truth", "solution", "metadata"]
        data = {k: data[k] for k in order}
    return json.dumps(data, ensure_ascii=False)


def substitute_answer(task: AnswerConstructionTask, candidate: CandidateAnswer) -> str:
    """Replace the placeholder's `sorry` body with the candidate expression.

    Everything outside the body span is byte-identical to the input source.
    """
    _, body_start, _, body_end, _ = _find_placeholder(task.formal_statement,
                                                      task.answer_name)
    body = task.formal_statement[body_start:body_end].strip()
    if body != "sorry":
        raise SubstitutionError(
            f"placeholder body of {task.answer_name!r} is {body!r}, expected `sorry`"
        )
    return (task.formal_statement[:body_start]
            + " " + candidate.expression
            + task.formal_statement[body_end:])


def render_equivalence_goal(task: AnswerConstructionTask,
                            candidate: CandidateAnswer,
                            ground_truth: str | None = None) -> str:
    """A standalone theorem asserting candidate = ground truth at the answer
    type, with a `sorry` hole for the tactic cascade to fill."""
    truth = ground_truth if ground_truth is not None else task.ground_truth
    if truth is None:
        raise SubstitutionError(f"task {task.id} has no ground truth")
    header = _header_lines(task.formal_statement)
    goal = (f"theorem {task.id}_answer_equiv :\n"
            f"    ({candidate.expression} : {task.answer_type}) = {truth} := by\n"
            f"  sorry\n")
    return header + goal


def _header_lines(formal: str) -> str:
    """Import/open lines of a source file, for wrapping standalone goals."""
    lines = [ln for ln in formal.splitlines()
             if ln.startswith("import ") or ln.startswith("open ")]
    return ("\n".join(lines) + "\n\n") if lines else ""


def render_compile_probe(task: AnswerConstructionTask, expression: str) -> str:
    """Wrap a candidate expression in the task's placeholder declaration plus
    the file header, for a cheap syntactic-validity check."""
    header = _header_lines(task.formal_statement)
    return f"{header}abbrev {task.answer_name} : {task.answer_type} := {expression}\n"


def load_corpus(path: str) -> list[DatasetRecord]:
    """Read a JSONL corpus. Per-line schema errors are reported with the
    1-based line number."""
    records: list[DatasetRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_record(line))
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_corpus(records: Iterable[DatasetRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(serialize_record(record) + "\n")
