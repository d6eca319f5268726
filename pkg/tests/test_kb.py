import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecp.kb import (DEFAULT_NAMESPACE_ALLOWLIST, HashNgramEmbedder, KbEntry,
                    KbError, KbIndex, StaleIndexError, filter_namespaces,
                    ingest, levenshtein, query_edit_distance, query_semantic,
                    suggest)


def levenshtein_oracle(a: str, b: str) -> int:
    """Quadratic DP oracle, full matrix, written independently."""
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + cost)
    return d[m][n]


def make_entries(count, seed=7):
    rng = random.Random(seed)
    namespaces = ["Nat", "Int", "Real", "Finset", "List", "Polynomial"]
    entries = []
    for i in range(count):
        ns = rng.choice(namespaces)
        name = f"{ns}.{''.join(rng.choices('abcdefgh_', k=rng.randint(3, 10)))}{i}"
        entries.append(KbEntry(full_name=name, kind="theorem",
                               signature=f"sig_{i} : Prop"))
    return entries


class TestEmbedder:
    def test_unit_norm(self):
        emb = HashNgramEmbedder()
        for text in ["Nat.gcd", "", "a longer piece of text about primes"]:
            assert abs(np.linalg.norm(emb.embed(text)) - 1.0) < 1e-6

    def test_deterministic(self):
        a = HashNgramEmbedder().embed("Nat.gcd")
        b = HashNgramEmbedder().embed("Nat.gcd")
        assert np.array_equal(a, b)

    def test_seed_changes_vectors(self):
        a = HashNgramEmbedder(seed=0).embed("Nat.gcd")
        b = HashNgramEmbedder(seed=1).embed("Nat.gcd")
        assert not np.array_equal(a, b)


class TestIngest:
    def test_well_formed_lines(self, tmp_path):
        path = tmp_path / "dump.jsonl"
        lines = [json.dumps({"name": f"Nat.f{i}", "kind": "definition",
                             "signature": "ℕ → ℕ"}) for i in range(3)]
        path.write_text("\n".join(lines) + "\n")
        entries, skipped = ingest(str(path))
        assert len(entries) == 3 and skipped == 0

    def test_malformed_line_counted(self, tmp_path):
        path = tmp_path / "dump.jsonl"
        lines = [json.dumps({"name": f"Nat.f{i}", "signature": "ℕ"})
                 for i in range(9)]
        lines.insert(4, "{broken json")
        path.write_text("\n".join(lines) + "\n")
        entries, skipped = ingest(str(path))
        assert len(entries) == 9 and skipped == 1


class TestNamespaceFilter:
    def test_listed_first_component_kept(self):
        kept = filter_namespaces([KbEntry("Nat.gcd", "definition", "ℕ → ℕ → ℕ")])
        assert [e.full_name for e in kept] == ["Nat.gcd"]

    def test_unlisted_dropped(self):
        entry = KbEntry("CategoryTheory.Functor.map", "definition", "sig")
        assert filter_namespaces([entry]) == []

    def test_empty_input(self):
        assert filter_namespaces([]) == []

    def test_empty_allowlist_rejected(self):
        with pytest.raises(KbError):
            filter_namespaces([], allowlist=[])

    def test_idempotent(self):
        entries = make_entries(50) + [
            KbEntry("CategoryTheory.whisker", "definition", "sig")]
        once = filter_namespaces(entries)
        assert filter_namespaces(once) == once

    def test_any_prefix_mode(self):
        entry = KbEntry("Order.Filter.map", "definition", "sig")
        assert filter_namespaces([entry], allowlist=["Filter"]) == []
        kept = filter_namespaces([entry], allowlist=["Order.Filter"],
                                 match_any_prefix=True)
        assert kept == [entry]


class TestSemanticQuery:
    def build(self, count=30):
        embedder = HashNgramEmbedder()
        entries = make_entries(count)
        return KbIndex.build(entries, embedder), embedder

    def test_self_similarity_ranks_first(self):
        index, embedder = self.build()
        entry = index.entries[4]
        results = query_semantic(index, entry.embed_text(), embedder, k=5)
        assert results[0][0] == entry
        assert abs(results[0][1] - 1.0) < 1e-6

    def test_k_larger_than_index(self):
        embedder = HashNgramEmbedder()
        index = KbIndex.build(make_entries(3), embedder)
        assert len(query_semantic(index, "anything", embedder, k=5)) == 3

    def test_matches_brute_force_oracle(self):
        index, embedder = self.build(200)
        rng = random.Random(3)
        for _ in range(100):
            query = "".join(rng.choices("abcdefg.N_", k=rng.randint(2, 12)))
            got = query_semantic(index, query, embedder, k=5)
            # oracle: explicit per-entry dot product, python sort
            q = embedder.embed(query)
            scored = [(float(np.dot(embedder.embed(e.embed_text()), q)), e)
                      for e in index.entries]
            scored.sort(key=lambda p: (-p[0], p[1].full_name))
            assert [(e.full_name, pytest.approx(s))
                    for s, e in scored[:5]] == [(e.full_name, pytest.approx(s))
                                                for e, s in got]

    def test_stale_index_rejected(self):
        index, _ = self.build()
        with pytest.raises(StaleIndexError):
            query_semantic(index, "x", HashNgramEmbedder(seed=9), k=5)


class TestLevenshtein:
    def test_known_distance(self):
        assert levenshtein("Nat.gdc", "Nat.gcd") == 2
        assert levenshtein_oracle("Nat.gdc", "Nat.gcd") == 2

    def test_matches_oracle_random(self):
        rng = random.Random(11)
        for _ in range(100):
            a = "".join(rng.choices("abcN.", k=rng.randint(0, 12)))
            b = "".join(rng.choices("abcN.", k=rng.randint(0, 12)))
            assert levenshtein(a, b) == levenshtein_oracle(a, b)

    @settings(max_examples=60)
    @given(st.text(alphabet="abcN.", max_size=12),
           st.text(alphabet="abcN.", max_size=12),
           st.text(alphabet="abcN.", max_size=12))
    def test_metric_axioms(self, x, y, z):
        assert levenshtein(x, x) == 0
        assert levenshtein(x, y) == levenshtein(y, x)
        assert levenshtein(x, z) <= levenshtein(x, y) + levenshtein(y, z)


class TestEditDistanceQuery:
    def test_exact_symbol_rank_one(self):
        embedder = HashNgramEmbedder()
        index = KbIndex.build(make_entries(30), embedder)
        target = index.entries[7].full_name
        results = query_edit_distance(index, target, k=5)
        assert results[0] == (index.entries[7], 0)

    def test_matches_oracle_random(self):
        index = KbIndex.build(make_entries(100), HashNgramEmbedder())
        rng = random.Random(5)
        for _ in range(100):
            symbol = "".join(rng.choices("abcdefgh._N", k=rng.randint(1, 10)))
            got = query_edit_distance(index, symbol, k=5)
            scored = sorted(((levenshtein_oracle(symbol, e.full_name), e)
                             for e in index.entries),
                            key=lambda p: (p[0], p[1].full_name))
            assert [(e.full_name, d) for d, e in scored[:5]] == \
                [(e.full_name, d) for e, d in got]

    def test_empty_symbol_rejected(self):
        index = KbIndex.build(make_entries(3), HashNgramEmbedder())
        with pytest.raises(KbError):
            query_edit_distance(index, "", k=5)


class TestIndexPersistence:
    def test_save_load_round_trip(self, tmp_path):
        embedder = HashNgramEmbedder()
        index = KbIndex.build(make_entries(20), embedder)
        path = tmp_path / "kb.idx"
        index.save(str(path))
        loaded = KbIndex.load(str(path))
        assert loaded.embedder_id == index.embedder_id
        assert [e.full_name for e in loaded.entries] == \
            [e.full_name for e in index.entries]
        # float32 round trip keeps rankings identical
        got = query_semantic(loaded, "Nat.abc", embedder, k=5)
        want = query_semantic(index, "Nat.abc", embedder, k=5)
        assert [e.full_name for e, _ in got] == [e.full_name for e, _ in want]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"not an index")
        with pytest.raises(KbError):
            KbIndex.load(str(path))


class TestSuggest:
    def test_renders_both_retrievals(self):
        embedder = HashNgramEmbedder()
        entries = make_entries(30) + [KbEntry("Nat.gcd", "definition",
                                              "ℕ → ℕ → ℕ")]
        index = KbIndex.build(entries, embedder)
        block = suggest(index, ["Nat.gdc"], embedder, k=5)
        assert "Nat.gdc" in block
        assert "Nat.gcd" in block
