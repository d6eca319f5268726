"""Top-level per-task pipelines and run orchestration.

`solve_task` runs one task through either the full
enumerate/conjecture/prove pipeline (`ecp`) or the direct-conjecture
baseline (`cot`, which skips enumeration). `solve_corpus` fans tasks out on
a bounded worker pool and assembles a RunReport; stage transcripts land
under `runs/<run-id>/<task-id>/`.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .conjecture import ConjectureConfig, ConjectureOutcome, conjecture
from .enumerate_stage import EnumerationConfig, EnumerationOutput, enumerate_answers
from .gateway import Backend, BackendConfig
from .leanbridge import Verifier, source_digest
from .metrics import ReportRow, RunReport, evaluate_equivalence
from .prove import ProveConfig, ProofOutcome, prove
from .sandbox import Sandbox
from .tasks import AnswerConstructionTask, DatasetRecord, substitute_answer


@dataclass
class TaskOutcome:
    task_id: str
    method: str
    enumeration: EnumerationOutput | None
    conjecture: ConjectureOutcome
    construction_solved: bool
    proof: ProofOutcome | None

    def report_row(self) -> ReportRow:
        candidate = self.conjecture.candidate
        return ReportRow(
            task_id=self.task_id,
            method=self.method,
            candidate_digest=(source_digest(candidate.expression)
                              if candidate else None),
            construction_solved=self.construction_solved,
            end_to_end_solved=bool(self.proof and self.proof.success),
            proof_method=self.proof.method if self.proof else None,
        )


def solve_task(task: AnswerConstructionTask, method: str, backend: Backend,
               sandbox: Sandbox, lean: Verifier,
               enum_config: EnumerationConfig,
               conj_config: ConjectureConfig,
               prove_config: ProveConfig,
               conjecturer: BackendConfig,
               log_dir: str | None = None) -> TaskOutcome:
    if method not in ("ecp", "cot"):
        raise ValueError(f"unknown method {method!r}")
    enumeration: EnumerationOutput | None = None
    hints: list[str] = []
    if method == "ecp":
        enumeration = enumerate_answers(task, backend, sandbox, enum_config,
                                        conjecturer)
        hints = enumeration.answers
    conj = conjecture(task, hints, backend, lean, conj_config, conjecturer)
    construction_solved = False
    proof: ProofOutcome | None = None
    if conj.candidate is not None:
        if task.ground_truth is not None:
            construction_solved = evaluate_equivalence(
                task, conj.candidate, lean,
                timeout_s=prove_config.verify_timeout_s)
        theorem_source = substitute_answer(task, conj.candidate)
        proof = prove(theorem_source, lean, backend, prove_config,
                      task_id=f"{method}:{task.id}")
    outcome = TaskOutcome(task_id=task.id, method=method,
                          enumeration=enumeration, conjecture=conj,
                          construction_solved=construction_solved, proof=proof)
    if log_dir is not None:
        _write_logs(outcome, log_dir)
    return outcome


def _write_logs(outcome: TaskOutcome, log_dir: str) -> None:
    task_dir = os.path.join(log_dir, outcome.task_id)
    os.makedirs(task_dir, exist_ok=True)
    prefix = "" if outcome.method == "ecp" else f"{outcome.method}_"
    if outcome.enumeration is not None:
        _dump(os.path.join(task_dir, f"{prefix}enumerate.json"), {
            "status": outcome.enumeration.status,
            "attempts_used": outcome.enumeration.attempts_used,
            "answers": outcome.enumeration.answers,
            "transcript": outcome.enumeration.transcript.to_dict(),
        })
    _dump(os.path.join(task_dir, f"{prefix}conjecture.json"), {
        "candidate": (outcome.conjecture.candidate.expression
                      if outcome.conjecture.candidate else None),
        "attempts_used": outcome.conjecture.attempts_used,
        "rejected": outcome.conjecture.rejected,
        "transcript": outcome.conjecture.transcript.to_dict(),
    })
    if outcome.proof is not None:
        _dump(os.path.join(task_dir, f"{prefix}prove.json"),
              outcome.proof.to_dict())


def _dump(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)


def solve_corpus(records: list[DatasetRecord], methods: list[str],
                 backend: Backend, sandbox: Sandbox, lean: Verifier,
                 enum_config: EnumerationConfig,
                 conj_config: ConjectureConfig,
                 prove_config: ProveConfig,
                 conjecturer: BackendConfig,
                 run_dir: str | None = None,
                 jobs: int = 1) -> RunReport:
    """Run every (task, method) pair and assemble the report. Row order is
    deterministic (corpus order, then method) regardless of worker count."""
    work = [(record.task, method) for record in records for method in methods]

    def run_one(item: tuple[AnswerConstructionTask, str]) -> ReportRow:
        task, method = item
        outcome = solve_task(task, method, backend, sandbox, lean,
                             enum_config, conj_config, prove_config,
                             conjecturer, log_dir=run_dir)
        return outcome.report_row()

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, work))
    else:
        rows = [run_one(item) for item in work]
    return RunReport(total=len(records), rows=rows)
