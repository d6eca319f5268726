"""Prove stage: close the substituted theorem with the symbolic tactic
cascade, falling back to Pass@k sampling from a prover backend.

Pass@k semantics: up to k independent proof samples are drawn; the problem
counts as solved if any sample verifies. With early exit on, sampling stops
at the first verified proof, which never changes the success verdict, only
the number of samples tried.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .gateway import (Backend, BackendConfig, ChatMessage, GatewayError,
                      last_fenced_block)
from .leanbridge import Verifier, cascade_prove, fill_proof_hole
from .prompt_assets import load_prompt


class ProofExtractionError(Exception):
    """Prover reply contains no usable proof text."""


@dataclass(frozen=True)
class ProveConfig:
    k: int = 32
    verify_timeout_s: float = 120.0
    prover: BackendConfig = field(
        default_factory=lambda: BackendConfig(model_id="prover",
                                              temperature=1.0, top_p=0.95,
                                              max_tokens=4096))
    try_cascade_first: bool = True
    early_exit: bool = True


@dataclass
class ProofOutcome:
    success: bool
    method: str  # cascade | prover_sample
    winning_proof: str | None = None
    samples_tried: int = 0
    winning_sample_index: int | None = None
    winning_tactic: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {"success": self.success, "method": self.method,
                "winning_proof": self.winning_proof,
                "samples_tried": self.samples_tried,
                "winning_sample_index": self.winning_sample_index,
                "winning_tactic": self.winning_tactic, "error": self.error}


_DECL_START_RE = re.compile(r"^\s*(import|open|theorem|lemma|example|abbrev|def|noncomputable)\b")


def extract_proof(message: ChatMessage) -> str:
    """Proof payload of a prover reply: the last fenced block, else a bare
    `by ...` body if the whole reply looks like one."""
    block = last_fenced_block(message.content)
    if block is not None:
        text = block.strip()
    else:
        text = message.content.strip()
        if not (text.startswith("by") or _DECL_START_RE.match(text)):
            raise ProofExtractionError("no fenced proof block in reply")
    if not text:
        raise ProofExtractionError("empty proof block")
    return text


def apply_proof(theorem_source: str, proof: str) -> str:
    """Substitute a sampled proof into the theorem. A full declaration
    replaces the source outright; a tactic/term proof fills the hole."""
    if _DECL_START_RE.match(proof):
        return proof
    return fill_proof_hole(theorem_source, proof)


def _prove_prompt(theorem_source: str) -> list[ChatMessage]:
    return [
        ChatMessage(role="system", content=load_prompt("prove_system")),
        ChatMessage(role="user",
                    content=f"Prove the following theorem:\n```lean\n"
                            f"{theorem_source}\n```\n"),
    ]


def prove(theorem_source: str, lean: Verifier, backend: Backend,
          config: ProveConfig, task_id: str = "") -> ProofOutcome:
    """Attempt to close the theorem's proof hole. The source must compile up
    to its `sorry` (checked once before any proof attempt)."""
    precheck = lean.check(theorem_source, config.verify_timeout_s)
    if not precheck.success:
        return ProofOutcome(success=False, method="cascade", samples_tried=0,
                            error="substituted theorem does not compile")
    if config.try_cascade_first:
        outcome = cascade_prove(theorem_source, lean, config.verify_timeout_s)
        if outcome.winning_tactic is not None:
            return ProofOutcome(success=True, method="cascade",
                                winning_proof=outcome.winning_tactic,
                                samples_tried=0,
                                winning_tactic=outcome.winning_tactic)
    messages = _prove_prompt(theorem_source)
    samples_tried = 0
    winning_index: int | None = None
    winning_proof: str | None = None
    success = False
    for i in range(config.k):
        try:
            reply = backend.complete(messages, config.prover,
                                     tag=f"prove:{task_id}:{i}")
        except GatewayError as exc:
            return ProofOutcome(success=False, method="prover_sample",
                                samples_tried=samples_tried, error=str(exc))
        samples_tried += 1
        try:
            proof = extract_proof(reply)
            candidate_source = apply_proof(theorem_source, proof)
        except (ProofExtractionError, ValueError):
            continue
        verdict = lean.check(candidate_source, config.verify_timeout_s)
        if verdict.success:
            success = True
            if winning_index is None:
                winning_index = i
                winning_proof = proof
            if config.early_exit:
                break
    return ProofOutcome(success=success, method="prover_sample",
                        winning_proof=winning_proof,
                        samples_tried=samples_tried,
                        winning_sample_index=winning_index)
