"""Dataset tooling and evaluation metrics.

Deduplication is two-pass: exact matching after normalization, then a greedy
embedding scan in corpus order that removes records whose informal text is
within the cosine threshold of an already-kept record. Metrics mirror the
evaluation protocol: answer-construction accuracy, end-to-end accuracy, and
union accuracy over two methods.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .kb import Embedder
from .leanbridge import Verifier, cascade_prove
from .tasks import (AnswerConstructionTask, CandidateAnswer, DatasetRecord,
                    render_equivalence_goal)

# Reported full-scale numbers from the source experiments; reproducible only
# with live models and a full toolchain, surfaced in reports as references.
LIVE_MODE_REFERENCES = {
    "constructivebench_construction_cot": 0.697,
    "constructivebench_construction_ecp": 0.736,
    "constructivebench_end_to_end_cot": 0.325,
    "constructivebench_end_to_end_ecp": 0.331,
    "putnambench_end_to_end_ecp_solved": 6,
    "putnambench_total": 337,
    "constructivebench_total": 3640,
}


@dataclass(frozen=True)
class DedupConfig:
    similarity_threshold: float = 0.90
    embedder_id: str = ""

    def __post_init__(self) -> None:
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must be in (0, 1]")


def normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.casefold()).strip()


def dedup(records: list[DatasetRecord], config: DedupConfig,
          embedder: Embedder) -> tuple[list[DatasetRecord], list[list[str]]]:
    """Two-pass deduplication over informal statements.

    Returns surviving records in input order and the removed groups, each as
    `[kept_id, removed_id, ...]`.
    """
    if config.embedder_id and embedder.embedder_id != config.embedder_id:
        raise ValueError(
            f"embedder {embedder.embedder_id!r} does not match config "
            f"{config.embedder_id!r}")
    survivors: list[DatasetRecord] = []
    kept_vectors: list[np.ndarray] = []
    by_norm: dict[str, int] = {}
    groups: dict[int, list[str]] = {}
    for record in records:
        text = record.task.informal_statement
        norm = normalize_text(text)
        if norm in by_norm:
            groups.setdefault(by_norm[norm], []).append(record.task.id)
            continue
        vec = embedder.embed(norm)
        matched = None
        for idx, kv in enumerate(kept_vectors):
            if float(kv @ vec) >= config.similarity_threshold:
                matched = idx
                break
        if matched is not None:
            groups.setdefault(matched, []).append(record.task.id)
            continue
        by_norm[norm] = len(survivors)
        survivors.append(record)
        kept_vectors.append(vec)
    removed_groups = [[survivors[idx].task.id, *ids]
                      for idx, ids in sorted(groups.items())]
    return survivors, removed_groups


def split_after_cutoff(records: list[DatasetRecord],
                       cutoff: date) -> list[DatasetRecord]:
    """Records created strictly after the cutoff date; undated records are
    excluded."""
    out = []
    for record in records:
        created = record.task.metadata.created_after_date()
        if created is not None and created > cutoff:
            out.append(record)
    return out


@dataclass
class MethodResult:
    method: str  # cot | ecp
    attempted: set[str] = field(default_factory=set)
    solved_construction: set[str] = field(default_factory=set)
    solved_end_to_end: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if not self.solved_end_to_end <= self.solved_construction <= self.attempted:
            raise ValueError(
                "require solved_end_to_end ⊆ solved_construction ⊆ attempted")


def construction_accuracy(result: MethodResult, total: int) -> float:
    return len(result.solved_construction) / total if total else 0.0


def end_to_end_accuracy(result: MethodResult, total: int) -> float:
    return len(result.solved_end_to_end) / total if total else 0.0


def union_accuracy(a: set[str], b: set[str], total: int) -> float:
    return len(a | b) / total if total else 0.0


def evaluate_equivalence(task: AnswerConstructionTask,
                         candidate: CandidateAnswer, lean: Verifier,
                         timeout_s: float = 120.0) -> bool:
    """True iff some cascade tactic closes the candidate = ground-truth goal."""
    goal = render_equivalence_goal(task, candidate)
    return cascade_prove(goal, lean, timeout_s).winning_tactic is not None


@dataclass
class ReportRow:
    task_id: str
    method: str
    candidate_digest: str | None
    construction_solved: bool
    end_to_end_solved: bool
    proof_method: str | None = None
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "method": self.method,
                "candidate_digest": self.candidate_digest,
                "construction_solved": self.construction_solved,
                "end_to_end_solved": self.end_to_end_solved,
                "proof_method": self.proof_method,
                "elapsed_s": self.elapsed_s}

    @classmethod
    def from_dict(cls, data: dict) -> "ReportRow":
        return cls(task_id=data["task_id"], method=data["method"],
                   candidate_digest=data.get("candidate_digest"),
                   construction_solved=data["construction_solved"],
                   end_to_end_solved=data["end_to_end_solved"],
                   proof_method=data.get("proof_method"),
                   elapsed_s=data.get("elapsed_s", 0.0))


@dataclass
class RunReport:
    total: int
    rows: list[ReportRow] = field(default_factory=list)

    def method_result(self, method: str) -> MethodResult:
        rows = [r for r in self.rows if r.method == method]
        return MethodResult(
            method=method,
            attempted={r.task_id for r in rows},
            solved_construction={r.task_id for r in rows if r.construction_solved},
            solved_end_to_end={r.task_id for r in rows if r.end_to_end_solved},
        )

    def aggregates(self) -> dict:
        methods = sorted({r.method for r in self.rows})
        agg: dict = {"total": self.total, "methods": {}}
        results = {m: self.method_result(m) for m in methods}
        for m, res in results.items():
            agg["methods"][m] = {
                "construction_accuracy": construction_accuracy(res, self.total),
                "end_to_end_accuracy": end_to_end_accuracy(res, self.total),
                "solved_construction": sorted(res.solved_construction),
                "solved_end_to_end": sorted(res.solved_end_to_end),
            }
        if {"cot", "ecp"} <= set(methods):
            agg["union"] = {
                "construction_accuracy": union_accuracy(
                    results["cot"].solved_construction,
                    results["ecp"].solved_construction, self.total),
                "end_to_end_accuracy": union_accuracy(
                    results["cot"].solved_end_to_end,
                    results["ecp"].solved_end_to_end, self.total),
            }
        return agg

    def to_dict(self) -> dict:
        return {"total": self.total,
                "rows": [r.to_dict() for r in self.rows],
                "aggregates": self.aggregates(),
                "live_mode_references": LIVE_MODE_REFERENCES}

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        report = cls(total=data["total"],
                     rows=[ReportRow.from_dict(r) for r in data["rows"]])
        if "aggregates" in data and data["aggregates"] != report.aggregates():
            raise ValueError("report aggregates do not match row recomputation")
        return report


def _pct(x: float) -> str:
    return f"{100 * x:.1f}%"


def emit_report(report: RunReport, fmt: str = "markdown") -> str:
    """Render a report deterministically. Percentages use one decimal."""
    agg = report.aggregates()
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True,
                          ensure_ascii=False)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["task_id", "method", "construction_solved",
                         "end_to_end_solved", "proof_method"])
        for row in sorted(report.rows, key=lambda r: (r.task_id, r.method)):
            writer.writerow([row.task_id, row.method,
                             int(row.construction_solved),
                             int(row.end_to_end_solved),
                             row.proof_method or ""])
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| Metric | CoT | ECP | Union |",
                 "| --- | --- | --- | --- |"]
        methods = agg["methods"]
        for label, key in (("Answer construction", "construction_accuracy"),
                           ("End-to-end", "end_to_end_accuracy")):
            cot = _pct(methods["cot"][key]) if "cot" in methods else "-"
            ecp = _pct(methods["ecp"][key]) if "ecp" in methods else "-"
            union = _pct(agg["union"][key]) if "union" in agg else "-"
            lines.append(f"| {label} | {cot} | {ecp} | {union} |")
        lines.append("")
        lines.append(f"Total problems: {report.total}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
