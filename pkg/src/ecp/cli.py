"""Command-line interface binding all pipeline stages.

Exit codes: 0 success, 1 pipeline failures present, 2 configuration error.
`--replay <dir>` answers every model, sandbox, and Lean interaction from
fixtures (no network, no toolchain); `--record <dir>` runs live and writes
the same fixture layout.
"""

from __future__ import annotations

import json
import os
import sys
import uuid
from dataclasses import dataclass
from datetime import date

import click

from . import autoformalize as af
from . import kb as kbmod
from . import metrics, tasks
from .config import ConfigError, RunConfig, load_config
from .conjecture import conjecture as run_conjecture
from .enumerate_stage import enumerate_answers
from .gateway import (FixtureStore, GatewayError, LiveBackend, MissingFixtureError,
                      RecordingBackend, ReplayBackend)
from .leanbridge import (CachingVerifier, LeanCliVerifier, MissingVerdictError,
                         MockVerifier, RecordingVerifier)
from .pipeline import solve_corpus
from .prove import prove as run_prove
from .sandbox import (MissingSandboxFixtureError, RecordingSandbox,
                      ReplaySandbox, SandboxError, SubprocessSandbox)

PIPELINE_ERRORS = (GatewayError, MissingFixtureError, MissingVerdictError,
                   SandboxError, MissingSandboxFixtureError,
                   tasks.CorpusError, tasks.SubstitutionError)


@dataclass
class Runtime:
    config: RunConfig
    replay_dir: str | None
    record_dir: str | None
    run_id: str
    jobs: int

    def backend(self):
        if self.replay_dir:
            return ReplayBackend(FixtureStore(os.path.join(self.replay_dir, "llm")))
        provider = next(iter(self.config.providers), "openai")
        base_url = self.config.providers.get(provider,
                                             "https://api.openai.com/v1")
        live = LiveBackend(provider=provider, base_url=base_url)
        if self.record_dir:
            return RecordingBackend(
                live, FixtureStore(os.path.join(self.record_dir, "llm")))
        return live

    def sandbox(self):
        if self.replay_dir:
            return ReplaySandbox(os.path.join(self.replay_dir, "sandbox"))
        inner = SubprocessSandbox(self.config.sandbox_command)
        if self.record_dir:
            return RecordingSandbox(inner, os.path.join(self.record_dir, "sandbox"))
        return inner

    def lean(self):
        if self.replay_dir:
            return MockVerifier.from_file(
                os.path.join(self.replay_dir, "lean_table.json"))
        inner = CachingVerifier(LeanCliVerifier(
            toolchain_root=self.config.lean_toolchain_root,
            version=self.config.lean_version,
            command=self.config.lean_command))
        if self.record_dir:
            return RecordingVerifier(
                inner, os.path.join(self.record_dir, "lean_table.json"))
        return inner


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file (JSON or YAML).")
@click.option("--replay", "replay_dir", type=click.Path(), default=None,
              help="Fixture directory to replay from (deterministic, offline).")
@click.option("--record", "record_dir", type=click.Path(), default=None,
              help="Fixture directory to record into while running live.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker pool size for per-task pipelines.")
@click.option("--run-id", default=None, help="Run identifier for log paths.")
@click.pass_context
def main(ctx, config_path, replay_dir, record_dir, jobs, run_id):
    """Enumerate-Conjecture-Prove pipeline for answer-construction problems."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    if replay_dir and record_dir:
        click.echo("configuration error: --replay and --record are exclusive",
                   err=True)
        sys.exit(2)
    ctx.obj = Runtime(config=cfg, replay_dir=replay_dir, record_dir=record_dir,
                      run_id=run_id or uuid.uuid4().hex[:8],
                      jobs=jobs if jobs > 0 else cfg.jobs)


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@main.command()
@click.option("--in", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "output_path", required=True, type=click.Path())
@click.option("--trace", "trace_dir", type=click.Path(), default=None)
@click.pass_obj
def formalize(rt: Runtime, input_path, output_path, trace_dir):
    """Autoformalize informal problems (JSONL with `id` and `informal`)."""
    backend = rt.backend()
    lean = rt.lean()
    accepted: list[tasks.DatasetRecord] = []
    failures = 0
    with open(input_path, encoding="utf-8") as fh:
        problems = [json.loads(line) for line in fh if line.strip()]
    for problem in problems:
        try:
            result = af.autoformalize(
                problem["informal"], lean, kb_index=None, embedder=None,
                backend=backend, config=rt.config.autoformalize,
                problem_id=problem.get("id"))
        except PIPELINE_ERRORS as exc:
            _fail(str(exc))
        if trace_dir:
            os.makedirs(trace_dir, exist_ok=True)
            with open(os.path.join(trace_dir, f"{problem.get('id', 'problem')}.json"),
                      "w", encoding="utf-8") as fh:
                json.dump([t.to_dict() for t in result.trace], fh, indent=2)
        if result.accepted is None:
            failures += 1
        else:
            task, _model, _it = result.accepted
            accepted.append(tasks.DatasetRecord(task=task))
    tasks.save_corpus(accepted, output_path)
    click.echo(f"accepted {len(accepted)}/{len(problems)} formalizations")
    sys.exit(1 if failures else 0)


@main.command("enumerate")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--task", "task_id", required=True)
@click.pass_obj
def enumerate_cmd(rt: Runtime, corpus, task_id):
    """Run the enumeration stage for one task."""
    task = _find_task(corpus, task_id)
    try:
        output = enumerate_answers(task, rt.backend(), rt.sandbox(),
                                   rt.config.enumeration,
                                   rt.config.backend_config("conjecturer"))
    except PIPELINE_ERRORS as exc:
        _fail(str(exc))
    click.echo(json.dumps({"status": output.status,
                           "attempts_used": output.attempts_used,
                           "answers": output.answers}, indent=2))
    sys.exit(0 if output.status == "ok" else 1)


@main.command("conjecture")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--task", "task_id", required=True)
@click.option("--hint", "hints", multiple=True,
              help="Enumerated answer hint (repeatable).")
@click.pass_obj
def conjecture_cmd(rt: Runtime, corpus, task_id, hints):
    """Run the conjecture stage for one task."""
    task = _find_task(corpus, task_id)
    try:
        outcome = run_conjecture(task, list(hints), rt.backend(), rt.lean(),
                                 rt.config.conjecture,
                                 rt.config.backend_config("conjecturer"))
    except PIPELINE_ERRORS as exc:
        _fail(str(exc))
    click.echo(json.dumps({
        "candidate": outcome.candidate.expression if outcome.candidate else None,
        "attempts_used": outcome.attempts_used,
        "rejected": outcome.rejected}, indent=2))
    sys.exit(0 if outcome.candidate else 1)


@main.command("prove")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--task", "task_id", required=True)
@click.option("--answer", required=True, help="Candidate answer expression.")
@click.pass_obj
def prove_cmd(rt: Runtime, corpus, task_id, answer):
    """Substitute a candidate answer and attempt a verified proof."""
    task = _find_task(corpus, task_id)
    try:
        candidate = tasks.CandidateAnswer(expression=answer)
        source = tasks.substitute_answer(task, candidate)
        outcome = run_prove(source, rt.lean(), rt.backend(), rt.config.prove,
                            task_id=task_id)
    except PIPELINE_ERRORS as exc:
        _fail(str(exc))
    click.echo(json.dumps(outcome.to_dict(), indent=2))
    sys.exit(0 if outcome.success else 1)


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--method", "methods", multiple=True,
              type=click.Choice(["ecp", "cot"]), default=("ecp",),
              show_default=True)
@click.option("--out", "output_path", type=click.Path(), default=None,
              help="Write the JSON report here (default runs/<run-id>/report.json).")
@click.option("--runs-dir", type=click.Path(), default="runs", show_default=True)
@click.pass_obj
def solve(rt: Runtime, corpus, methods, output_path, runs_dir):
    """Run the full pipeline over a corpus and emit a RunReport."""
    records = tasks.load_corpus(corpus)
    run_dir = os.path.join(runs_dir, rt.run_id)
    os.makedirs(run_dir, exist_ok=True)
    try:
        report = solve_corpus(records, list(methods), rt.backend(),
                              rt.sandbox(), rt.lean(),
                              rt.config.enumeration, rt.config.conjecture,
                              rt.config.prove,
                              rt.config.backend_config("conjecturer"),
                              run_dir=run_dir, jobs=rt.jobs)
    except PIPELINE_ERRORS as exc:
        _fail(str(exc))
    out = output_path or os.path.join(run_dir, "report.json")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(metrics.emit_report(report, "json"))
    click.echo(metrics.emit_report(report, "markdown"))
    agg = report.aggregates()
    all_solved = all(agg["methods"][m]["construction_accuracy"] > 0
                     for m in agg["methods"])
    sys.exit(0 if all_solved else 1)


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--task", "task_id", required=True)
@click.option("--answer", required=True)
@click.pass_obj
def evaluate(rt: Runtime, corpus, task_id, answer):
    """Check a candidate against the ground truth via the tactic cascade."""
    task = _find_task(corpus, task_id)
    try:
        candidate = tasks.CandidateAnswer(expression=answer)
        ok = metrics.evaluate_equivalence(task, candidate, rt.lean(),
                                          rt.config.prove.verify_timeout_s)
    except PIPELINE_ERRORS as exc:
        _fail(str(exc))
    click.echo("equivalent" if ok else "not equivalent")
    sys.exit(0 if ok else 1)


@main.group()
def dataset():
    """Corpus tooling."""


@dataset.command("dedup")
@click.option("--in", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "output_path", required=True, type=click.Path())
@click.option("--threshold", type=float, default=0.90, show_default=True)
@click.pass_obj
def dataset_dedup(rt: Runtime, input_path, output_path, threshold):
    records = tasks.load_corpus(input_path)
    embedder = kbmod.HashNgramEmbedder()
    survivors, groups = metrics.dedup(
        records, metrics.DedupConfig(similarity_threshold=threshold,
                                     embedder_id=embedder.embedder_id),
        embedder)
    tasks.save_corpus(survivors, output_path)
    click.echo(f"kept {len(survivors)}/{len(records)} "
               f"({len(groups)} duplicate groups removed)")


@dataset.command("split")
@click.option("--in", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "output_path", required=True, type=click.Path())
@click.option("--cutoff", required=True, help="ISO cutoff date, e.g. 2024-06-30.")
@click.pass_obj
def dataset_split(rt: Runtime, input_path, output_path, cutoff):
    records = tasks.load_corpus(input_path)
    try:
        cutoff_date = date.fromisoformat(cutoff)
    except ValueError:
        _fail(f"invalid cutoff date {cutoff!r}", code=2)
    subset = metrics.split_after_cutoff(records, cutoff_date)
    tasks.save_corpus(subset, output_path)
    click.echo(f"{len(subset)} records after {cutoff}")


@main.group()
def kb():
    """Lean declaration knowledge base."""


@kb.command("build")
@click.option("--dump", "dump_path", required=True, type=click.Path(exists=True))
@click.option("--out", "index_path", required=True, type=click.Path())
@click.option("--filter/--no-filter", "apply_filter", default=True,
              show_default=True, help="Apply the namespace allowlist.")
@click.pass_obj
def kb_build(rt: Runtime, dump_path, index_path, apply_filter):
    entries, skipped = kbmod.ingest(dump_path)
    if skipped:
        click.echo(f"warning: skipped {skipped} malformed dump lines", err=True)
    if apply_filter:
        entries = kbmod.filter_namespaces(entries)
    embedder = kbmod.HashNgramEmbedder()
    index = kbmod.KbIndex.build(entries, embedder)
    index.save(index_path)
    click.echo(f"indexed {len(index)} entries")


@kb.command("query")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--text", default=None, help="Semantic query text.")
@click.option("--symbol", default=None, help="Edit-distance query symbol.")
@click.option("-k", type=int, default=5, show_default=True)
@click.pass_obj
def kb_query(rt: Runtime, index_path, text, symbol, k):
    if text is None and symbol is None:
        _fail("provide --text and/or --symbol", code=2)
    index = kbmod.KbIndex.load(index_path)
    embedder = kbmod.HashNgramEmbedder()
    if text is not None:
        for entry, score in kbmod.query_semantic(index, text, embedder, k):
            click.echo(f"{score:.4f}  {entry.full_name} : {entry.signature}")
    if symbol is not None:
        for entry, dist in kbmod.query_edit_distance(index, symbol, k):
            click.echo(f"d={dist}  {entry.full_name} : {entry.signature}")


@main.command()
@click.option("--in", "report_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv", "json"]),
              default="markdown", show_default=True)
@click.pass_obj
def report(rt: Runtime, report_path, fmt):
    """Re-render a stored RunReport (aggregates are recomputed and checked)."""
    with open(report_path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        run_report = metrics.RunReport.from_dict(data)
    except ValueError as exc:
        _fail(str(exc))
    click.echo(metrics.emit_report(run_report, fmt), nl=False)


def _find_task(corpus_path: str, task_id: str) -> tasks.AnswerConstructionTask:
    for record in tasks.load_corpus(corpus_path):
        if record.task.id == task_id:
            return record.task
    _fail(f"task {task_id!r} not found in {corpus_path}", code=2)
    raise AssertionError  # unreachable


if __name__ == "__main__":
    main()
