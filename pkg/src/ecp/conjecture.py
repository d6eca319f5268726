"""Conjecture stage: propose a closed-form Lean answer expression and guard
against trivializing ("cheating") answers.

A candidate is accepted only if it passes the mechanical triviality check and
compiles when substituted into the task's placeholder declaration. The echo
check compares the token sequence of any set-builder body in the candidate
against the theorem goal's predicate, after whitespace collapse and
bound-variable canonicalization.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, field

from .gateway import (Backend, BackendConfig, ChatMessage, GatewayError,
                      Transcript, last_fenced_block, validate_transcript)
from .leanbridge import Verifier
from .prompt_assets import load_prompt
from .tasks import (AnswerConstructionTask, CandidateAnswer,
                    render_compile_probe)

DEFAULT_ECHO_THRESHOLD = 0.90


@dataclass(frozen=True)
class ConjectureConfig:
    conjecturing_attempt: int = 5
    echo_threshold: float = DEFAULT_ECHO_THRESHOLD
    compile_timeout_s: float = 120.0


@dataclass(frozen=True)
class TrivialityVerdict:
    legal: bool
    reason: str  # ok | echoes_predicate | contains_sorry | contains_choice | references_hypotheses


@dataclass
class ConjectureOutcome:
    candidate: CandidateAnswer | None
    attempts_used: int
    transcript: Transcript
    rejected: list[dict] = field(default_factory=list)
    error: str | None = None


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.']*|\d+|[^\sA-Za-z0-9_]")


def tokenize(text: str) -> list[str]:
    """Lean-ish lexer: identifiers, numerals, and single symbol characters.
    Whitespace carries no information."""
    return _TOKEN_RE.findall(text)


_SET_BUILDER_RE = re.compile(r"\{([^{}|]*)\|((?:[^{}]|\{[^{}]*\})*)\}")


def _canonicalize(tokens: list[str], binders: list[str]) -> list[str]:
    """Rename each binder identifier to a positional placeholder, by order of
    first appearance in the token stream."""
    mapping: dict[str, str] = {}
    out: list[str] = []
    binder_set = set(binders)
    for tok in tokens:
        if tok in binder_set:
            if tok not in mapping:
                mapping[tok] = f"□{len(mapping)}"
            out.append(mapping[tok])
        else:
            out.append(tok)
    return out


def goal_predicate_tokens(task: AnswerConstructionTask,
                          canonicalize: bool = True) -> list[str]:
    """Token sequence of the theorem goal with the answer placeholder
    dropped. With `canonicalize` the theorem's binder names become
    positional placeholders; the raw view keeps them, which catches echoes
    that reuse binder names bound inside the goal itself."""
    source = task.formal_statement
    m = re.search(r"\btheorem\s+\S+", source)
    if not m:
        return []
    pos = m.end()
    depth = 0
    n = len(source)
    goal_start = None
    while pos < n:
        c = source[pos]
        if c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
        elif c == ":" and depth == 0 and source[pos:pos + 2] != ":=":
            goal_start = pos + 1
            break
        pos += 1
    if goal_start is None:
        return []
    end = source.find(":=", goal_start)
    goal = source[goal_start:end if end >= 0 else n]
    tokens = [t for t in tokenize(goal) if t != task.answer_name]
    if not canonicalize:
        return tokens
    binders = [name for name, _ in task.context_signature]
    return _canonicalize(tokens, binders)


def _prop_operators() -> str:
    return "=≠<>≤≥∈∉∣¬∧∨↔→∀∃"


def hypothesis_names(task: AnswerConstructionTask) -> list[str]:
    """Binder names whose declared type looks propositional."""
    ops = set(_prop_operators())
    names = []
    for name, type_text in task.context_signature:
        if any(ch in ops for ch in type_text) or type_text.strip() == "Prop":
            names.append(name)
    return names


def triviality_check(task: AnswerConstructionTask, expression: str,
                     echo_threshold: float = DEFAULT_ECHO_THRESHOLD) -> TrivialityVerdict:
    """Deterministic legality verdict for a candidate expression."""
    tokens = tokenize(expression)
    if "sorry" in tokens:
        return TrivialityVerdict(legal=False, reason="contains_sorry")
    if any(t in ("Classical.choose", "Classical.choice", "Classical.choose!")
           for t in tokens):
        return TrivialityVerdict(legal=False, reason="contains_choice")
    goal_canon = goal_predicate_tokens(task)
    goal_raw = goal_predicate_tokens(task, canonicalize=False)
    for m in _SET_BUILDER_RE.finditer(expression):
        binder_section, body = m.group(1), m.group(2)
        binder_names = [t for t in tokenize(binder_section.split(":")[0])
                        if re.match(r"[A-Za-z_]", t)]
        body_raw = tokenize(body)
        body_canon = _canonicalize(body_raw, binder_names)
        if not body_raw:
            continue
        score = 0.0
        for goal_tokens, body_tokens in ((goal_canon, body_canon),
                                         (goal_raw, body_raw)):
            if not goal_tokens:
                continue
            sm = difflib.SequenceMatcher(a=goal_tokens, b=body_tokens)
            score = max(score, sm.ratio(),
                        _containment(goal_tokens, body_tokens))
        if score >= echo_threshold:
            return TrivialityVerdict(legal=False, reason="echoes_predicate")
    hyps = set(hypothesis_names(task))
    if hyps & set(tokens):
        return TrivialityVerdict(legal=False, reason="references_hypotheses")
    return TrivialityVerdict(legal=True, reason="ok")


def _containment(goal_tokens: list[str], body_tokens: list[str]) -> float:
    """Fraction of the body's tokens covered by its longest common
    subsequence with the goal predicate, so a set-builder that restates a
    sub-predicate of a longer goal still registers as an echo."""
    sm = difflib.SequenceMatcher(a=goal_tokens, b=body_tokens)
    matched = sum(size for _, _, size in sm.get_matching_blocks())
    return matched / len(body_tokens) if body_tokens else 0.0


def _conjecture_prompt(task: AnswerConstructionTask,
                       hints: list[str] | None) -> str:
    prompt = (f"Problem `{task.id}`:\n\n{task.informal_statement}\n\n"
              f"Formal statement:\n```lean\n{task.formal_statement}\n```\n\n"
              f"State the closed-form value of `{task.answer_name} : "
              f"{task.answer_type}`.\n")
    if hints:
        prompt += ("\nProgram enumeration (hint):\n"
                   + "\n".join(hints) + "\n")
    return prompt


def conjecture(task: AnswerConstructionTask, enumeration_answers: list[str],
               backend: Backend, lean: Verifier, config: ConjectureConfig,
               backend_config: BackendConfig) -> ConjectureOutcome:
    """Propose-validate loop: each round the model emits an expression, which
    must pass the triviality check and compile in the placeholder probe."""
    messages: list[ChatMessage] = [
        ChatMessage(role="system", content=load_prompt("conjecture_system")),
        ChatMessage(role="user",
                    content=_conjecture_prompt(task, enumeration_answers or None)),
    ]
    rejected: list[dict] = []
    for attempt in range(1, config.conjecturing_attempt + 1):
        try:
            reply = backend.complete(messages, backend_config,
                                     tag=f"conjecture:{task.id}:{attempt}")
        except GatewayError as exc:
            transcript = Transcript(messages=tuple(messages), finished=False,
                                    finish_reason="error")
            return ConjectureOutcome(candidate=None, attempts_used=attempt - 1,
                                     transcript=transcript, rejected=rejected,
                                     error=str(exc))
        messages.append(reply)
        block = last_fenced_block(reply.content)
        expression = (block if block is not None else reply.content).strip()
        if not expression:
            rejected.append({"attempt": attempt, "expression": "",
                             "reason": "empty_reply"})
            messages.append(ChatMessage(
                role="user", content="Empty reply; state the answer expression "
                                     "in a fenced code block."))
            continue
        verdict = triviality_check(task, expression, config.echo_threshold)
        if not verdict.legal:
            rejected.append({"attempt": attempt, "expression": expression,
                             "reason": verdict.reason})
            messages.append(ChatMessage(
                role="user",
                content=f"Rejected ({verdict.reason}): the answer must be a "
                        f"closed form that does not restate the problem. "
                        f"Propose a different expression."))
            continue
        probe = render_compile_probe(task, expression)
        lean_verdict = lean.check(probe, config.compile_timeout_s)
        if not lean_verdict.success:
            diag_text = "\n".join(d.message for d in lean_verdict.diagnostics)
            rejected.append({"attempt": attempt, "expression": expression,
                             "reason": "compile_error", "diagnostics": diag_text})
            messages.append(ChatMessage(
                role="user",
                content=f"The expression does not compile:\n{diag_text}\n"
                        f"Fix it and reply with the corrected expression."))
            continue
        transcript = Transcript(messages=tuple(messages), finished=True,
                                finish_reason="natural")
        validate_transcript(transcript.messages)
        candidate = CandidateAnswer(expression=expression, stage="conjecture",
                                    model_id=backend_config.model_id,
                                    attempt=attempt, compiled="yes")
        return ConjectureOutcome(candidate=candidate, attempts_used=attempt,
                                 transcript=transcript, rejected=rejected)
    transcript = Transcript(messages=tuple(messages), finished=True,
                            finish_reason="natural")
    return ConjectureOutcome(candidate=None,
                             attempts_used=config.conjecturing_attempt,
                             transcript=transcript, rejected=rejected)
