"""Autoformalization: informal problem text to a formal answer-construction
task via an error-guided draft/compile/retrieve/refine loop.

Each configured model independently gets up to T iterations. A draft is
accepted iff the Lean check passes and the judge approves; compile errors
feed diagnostics plus knowledge-base retrieval suggestions back into the
next iteration, judge rejections feed the judge's feedback back. The first
acceptance across models wins (best-of-N).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .gateway import (Backend, BackendConfig, ChatMessage, GatewayError,
                      last_fenced_block)
from .kb import Embedder, KbIndex, suggest
from .leanbridge import Verifier, extract_unknown_identifiers, source_digest
from .prompt_assets import load_fewshot_examples, load_prompt
from .tasks import AnswerConstructionTask, CorpusError, DatasetRecord, parse_record


@dataclass(frozen=True)
class AutoformalizeConfig:
    max_iterations: int = 5
    models: tuple[BackendConfig, ...] = ()
    judge: BackendConfig | None = None
    few_shot: int = 3
    compile_timeout_s: float = 120.0


@dataclass(frozen=True)
class JudgeVerdict:
    approve: bool
    feedback: str = ""

    def __post_init__(self) -> None:
        if not self.approve and not self.feedback:
            raise ValueError("rejection requires feedback")


@dataclass
class IterationTrace:
    model_id: str
    iteration: int
    draft_digest: str
    compiled: bool
    judge_approved: bool | None = None

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "iteration": self.iteration,
                "draft_digest": self.draft_digest, "compiled": self.compiled,
                "judge_approved": self.judge_approved}


@dataclass
class FormalizationResult:
    accepted: tuple[AnswerConstructionTask, str, int] | None  # task, model, iteration
    trace: list[IterationTrace] = field(default_factory=list)
    error: str | None = None


_JSON_OBJ_RE = re.compile(r"\{[^{}]*\}", re.DOTALL)


def parse_judge_reply(content: str) -> JudgeVerdict:
    """Lenient extraction: the last JSON object in the reply; unparseable
    replies count as rejection."""
    candidates = []
    block = last_fenced_block(content)
    if block:
        candidates.append(block)
    candidates.extend(_JSON_OBJ_RE.findall(content))
    for text in reversed(candidates):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and isinstance(obj.get("approve"), bool):
            feedback = str(obj.get("feedback", ""))
            if not obj["approve"] and not feedback:
                feedback = "judge rejected without feedback"
            return JudgeVerdict(approve=obj["approve"], feedback=feedback)
    return JudgeVerdict(approve=False, feedback="unparseable judge reply")


def judge(informal: str, formal: str, backend: Backend,
          config: BackendConfig, tag: str | None = None) -> JudgeVerdict:
    messages = [
        ChatMessage(role="system", content=load_prompt("judge_system")),
        ChatMessage(role="user",
                    content=f"Informal problem:\n{informal}\n\n"
                            f"Candidate formalization:\n```lean\n{formal}\n```\n"),
    ]
    reply = backend.complete(messages, config, tag=tag)
    return parse_judge_reply(reply.content)


def _draft_prompt(informal: str, few_shot: int) -> str:
    parts = []
    for i, ex in enumerate(load_fewshot_examples(few_shot), start=1):
        parts.append(f"Example {i}:\nProblem: {ex['informal']}\n"
                     f"```lean\n{ex['formal']}\n```")
    parts.append(f"Problem: {informal}\nReply with the Lean formalization.")
    return "\n\n".join(parts)


_ANSWER_NAME_RE = re.compile(r"\babbrev\s+([A-Za-z0-9_']+_answer)\s*:")


def task_from_source(informal: str, formal: str,
                     problem_id: str | None = None) -> AnswerConstructionTask:
    """Build a task record from a formalization that follows the placeholder
    convention. Raises CorpusError when the convention is violated."""
    m = _ANSWER_NAME_RE.search(formal)
    if not m:
        raise CorpusError("formalization declares no `<name>_answer` abbrev")
    answer_name = m.group(1)
    pid = problem_id or answer_name.removesuffix("_answer")
    type_match = re.search(
        rf"abbrev\s+{re.escape(answer_name)}\s*:\s*(.+?)\s*:=", formal)
    if not type_match:
        raise CorpusError(f"abbrev {answer_name!r} has no type ascription")
    record = parse_record(json.dumps({
        "id": pid, "informal": informal, "formal": formal,
        "answer_name": answer_name, "answer_type": type_match.group(1).strip(),
    }))
    return record.task


def autoformalize(informal: str, lean: Verifier, kb_index: KbIndex | None,
                  embedder: Embedder | None, backend: Backend,
                  config: AutoformalizeConfig,
                  judge_backend: Backend | None = None,
                  problem_id: str | None = None) -> FormalizationResult:
    """Run the refinement loop for one informal problem across all models."""
    if not informal.strip():
        raise ValueError("informal statement is empty")
    judge_backend = judge_backend or backend
    trace: list[IterationTrace] = []
    for model_cfg in config.models:
        messages: list[ChatMessage] = [
            ChatMessage(role="system", content=load_prompt("formalize_system")),
            ChatMessage(role="user",
                        content=_draft_prompt(informal, config.few_shot)),
        ]
        for iteration in range(1, config.max_iterations + 1):
            tag = f"formalize:{problem_id or ''}:{model_cfg.model_id}:{iteration}"
            try:
                reply = backend.complete(messages, model_cfg, tag=tag)
            except GatewayError as exc:
                return FormalizationResult(accepted=None, trace=trace,
                                           error=str(exc))
            messages.append(reply)
            draft = last_fenced_block(reply.content) or reply.content
            draft = draft.strip()
            entry = IterationTrace(model_id=model_cfg.model_id,
                                   iteration=iteration,
                                   draft_digest=source_digest(draft),
                                   compiled=False)
            trace.append(entry)
            verdict = lean.check(draft, config.compile_timeout_s)
            if not verdict.success:
                diag_text = "\n".join(d.message for d in verdict.diagnostics)
                feedback = f"The formalization does not compile:\n{diag_text}"
                unknowns = extract_unknown_identifiers(verdict.diagnostics)
                if unknowns and kb_index is not None and embedder is not None:
                    feedback += "\n\n" + suggest(kb_index, unknowns, embedder)
                messages.append(ChatMessage(
                    role="user",
                    content=feedback + "\nRevise the formalization."))
                continue
            entry.compiled = True
            jv = judge(informal, draft, judge_backend,
                       config.judge or model_cfg,
                       tag=f"judge:{problem_id or ''}:{model_cfg.model_id}:{iteration}")
            entry.judge_approved = jv.approve
            if jv.approve:
                try:
                    task = task_from_source(informal, draft, problem_id)
                except CorpusError as exc:
                    messages.append(ChatMessage(
                        role="user",
                        content=f"The formalization violates the placeholder "
                                f"convention: {exc}. Revise it."))
                    entry.judge_approved = None
                    entry.compiled = True
                    continue
                return FormalizationResult(
                    accepted=(task, model_cfg.model_id, iteration), trace=trace)
            messages.append(ChatMessage(
                role="user",
                content=f"A judge rejected the formalization: {jv.feedback}\n"
                        f"Revise it."))
    return FormalizationResult(accepted=None, trace=trace)


def formalize_to_record(result: FormalizationResult,
                        informal: str) -> DatasetRecord | None:
    if result.accepted is None:
        return None
    task, _model, _iteration = result.accepted
    return DatasetRecord(task=task, informal_solution=None)
