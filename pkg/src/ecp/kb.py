"""Lean declaration knowledge base with dual retrieval.

Entries are ingested from a JSONL declaration dump, optionally filtered to a
namespace allowlist, embedded, and queried two ways: cosine similarity over
embeddings and Levenshtein distance over the qualified name. Retrieval is an
exact brute-force scan; at the scales involved a scan is milliseconds and
matches the test oracles by construction.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

# Namespace allowlist for high-school-level retrieval (first component match).
DEFAULT_NAMESPACE_ALLOWLIST = (
    "Nat", "Int", "Rat", "Real", "Complex", "ENat", "NNReal", "EReal",
    "Monoid", "CommMonoid", "Group", "CommGroup", "Ring", "CommRing",
    "Field", "Algebra", "Module", "Set", "Finset", "Fintype", "Multiset",
    "List", "Fin", "BigOperators", "Filter", "Polynomial", "Order",
    "SimpleGraph", "Equiv", "Embedding", "Injective", "Surjective",
    "Bijective", "Topology",
)

_KINDS = ("definition", "theorem", "abbreviation", "structure", "instance", "other")


class KbError(Exception):
    pass


class StaleIndexError(KbError):
    """Query embedder does not match the embedder that built the index."""


@dataclass(frozen=True)
class KbEntry:
    full_name: str
    kind: str
    signature: str
    doc: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"bad entry kind {self.kind!r}")

    @property
    def namespace(self) -> str:
        return self.full_name.rsplit(".", 1)[0] if "." in self.full_name else ""

    def embed_text(self) -> str:
        text = f"{self.full_name} : {self.signature}"
        if self.doc:
            text += " " + self.doc
        return text

    def to_dict(self) -> dict:
        return {"name": self.full_name, "kind": self.kind,
                "signature": self.signature, "doc": self.doc}

    @classmethod
    def from_dict(cls, data: dict) -> "KbEntry":
        return cls(full_name=data["name"], kind=data.get("kind", "other"),
                   signature=data.get("signature", ""), doc=data.get("doc"))


class Embedder(Protocol):
    @property
    def embedder_id(self) -> str: ...

    def embed(self, text: str) -> np.ndarray: ...


class HashNgramEmbedder:
    """Deterministic test embedder: hashed character n-gram counts, signed by
    a second hash bit, normalized to unit Euclidean norm.

    Uses sha1 rather than Python's `hash` so vectors are stable across
    platforms and processes.
    """

    def __init__(self, dim: int = 256, n: int = 3, seed: int = 0):
        self.dim = dim
        self.n = n
        self.seed = seed

    @property
    def embedder_id(self) -> str:
        return f"hash-ngram-{self.n}g-d{self.dim}-s{self.seed}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        padded = f"\x02{text}\x03"
        grams = [padded[i:i + self.n] for i in range(max(1, len(padded) - self.n + 1))]
        for gram in grams:
            h = hashlib.sha1(f"{self.seed}|{gram}".encode("utf-8")).digest()
            idx = int.from_bytes(h[:4], "little") % self.dim
            sign = 1.0 if h[4] & 1 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


def ingest(dump_path: str) -> tuple[list[KbEntry], int]:
    """Read a declaration dump (one JSON object per line). Malformed lines are
    skipped; the count of skipped lines is returned alongside the entries."""
    entries: list[KbEntry] = []
    skipped = 0
    with open(dump_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                entries.append(KbEntry.from_dict(data))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError):
                skipped += 1
    return entries, skipped


def filter_namespaces(entries: Sequence[KbEntry],
                      allowlist: Sequence[str] = DEFAULT_NAMESPACE_ALLOWLIST,
                      match_any_prefix: bool = False) -> list[KbEntry]:
    """Keep entries whose first namespace component (or, with
    `match_any_prefix`, any leading dotted prefix) is allowlisted."""
    if not allowlist:
        raise KbError("namespace allowlist is empty")
    allowed = set(allowlist)
    kept: list[KbEntry] = []
    for entry in entries:
        parts = entry.full_name.split(".")
        if match_any_prefix:
            prefixes = {".".join(parts[:i]) for i in range(1, len(parts))}
            ok = bool(prefixes & allowed)
        else:
            ok = len(parts) > 1 and parts[0] in allowed
        if ok:
            kept.append(entry)
    return kept


_MAGIC = b"ECPKB1\n"


class KbIndex:
    """Immutable embedded index over a list of entries."""

    def __init__(self, entries: list[KbEntry], vectors: np.ndarray,
                 embedder_id: str):
        if len(entries) != len(vectors):
            raise KbError("entries and vectors are not parallel")
        self.entries = entries
        self.vectors = vectors
        self.embedder_id = embedder_id

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def build(cls, entries: Sequence[KbEntry], embedder: Embedder) -> "KbIndex":
        if entries:
            vectors = np.stack([embedder.embed(e.embed_text()) for e in entries])
        else:
            vectors = np.zeros((0, 1), dtype=np.float64)
        return cls(list(entries), vectors, embedder.embedder_id)

    def save(self, path: str) -> None:
        dim = self.vectors.shape[1] if len(self) else 0
        header = json.dumps({"dimension": dim, "count": len(self),
                             "embedder_id": self.embedder_id})
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(header.encode("utf-8") + b"\n")
            for entry in self.entries:
                fh.write(json.dumps(entry.to_dict(), ensure_ascii=False).encode("utf-8"))
                fh.write(b"\n")
            fh.write(self.vectors.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str) -> "KbIndex":
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise KbError(f"{path}: not a KB index file")
            header = json.loads(fh.readline().decode("utf-8"))
            entries = [KbEntry.from_dict(json.loads(fh.readline().decode("utf-8")))
                       for _ in range(header["count"])]
            blob = fh.read(header["count"] * header["dimension"] * 4)
            vectors = np.frombuffer(blob, dtype="<f4").astype(np.float64)
            vectors = vectors.reshape(header["count"], header["dimension"]) \
                if header["count"] else np.zeros((0, 1))
        return cls(entries, vectors, header["embedder_id"])


def query_semantic(index: KbIndex, text: str, embedder: Embedder,
                   k: int = 5) -> list[tuple[KbEntry, float]]:
    """Top-k entries by cosine similarity, descending; ties broken by
    ascending qualified name."""
    if embedder.embedder_id != index.embedder_id:
        raise StaleIndexError(
            f"index built with {index.embedder_id!r}, "
            f"queried with {embedder.embedder_id!r}"
        )
    if not len(index):
        return []
    q = embedder.embed(text)
    scores = index.vectors @ q
    order = sorted(range(len(index)),
                   key=lambda i: (-scores[i], index.entries[i].full_name))
    return [(index.entries[i], float(scores[i])) for i in order[:k]]


def levenshtein(a: str, b: str) -> int:
    """Wagner-Fischer edit distance, two-row formulation."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        curr = [i]
        for j, cb in enumerate(b, start=1):
            curr.append(min(prev[j] + 1,
                            curr[j - 1] + 1,
                            prev[j - 1] + (ca != cb)))
        prev = curr
    return prev[-1]


def query_edit_distance(index: KbIndex, symbol: str,
                        k: int = 5) -> list[tuple[KbEntry, int]]:
    """Top-k entries by Levenshtein distance between the symbol and each
    qualified name, ascending; ties broken by ascending name."""
    if not symbol:
        raise KbError("empty query symbol")
    dists = [levenshtein(symbol, e.full_name) for e in index.entries]
    order = sorted(range(len(index)),
                   key=lambda i: (dists[i], index.entries[i].full_name))
    return [(index.entries[i], dists[i]) for i in order[:k]]


def suggest(index: KbIndex, unknown_identifiers: Sequence[str],
            embedder: Embedder, k: int = 5) -> str:
    """Render a retrieval block for prompt injection: per unknown identifier,
    up to k semantic and k edit-distance matches, duplicates collapsed."""
    sections: list[str] = []
    for ident in unknown_identifiers:
        seen: dict[str, KbEntry] = {}
        for entry, _score in query_semantic(index, ident, embedder, k):
            seen.setdefault(entry.full_name, entry)
        for entry, _dist in query_edit_distance(index, ident, k):
            seen.setdefault(entry.full_name, entry)
        lines = [f"Candidates for unknown identifier `{ident}`:"]
        lines += [f"  {e.full_name} : {e.signature}" for e in seen.values()]
        sections.append("\n".join(lines))
    return "\n\n".join(sections)
