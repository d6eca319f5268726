import pytest

from ecp.leanbridge import (TACTIC_CASCADE, CachingVerifier, CascadeOutcome,
                            Diagnostic, LeanVerdict, MissingVerdictError,
                            MockVerifier, RecordingVerifier, cascade_prove,
                            extract_unknown_identifiers, fill_proof_hole,
                            parse_diagnostics, source_digest)


class TestVerdictInvariants:
    def test_success_excludes_errors(self):
        with pytest.raises(ValueError):
            LeanVerdict(success=True, diagnostics=(
                Diagnostic(severity="error", line=1, column=0, message="boom"),))

    def test_timeout_excludes_success(self):
        with pytest.raises(ValueError):
            LeanVerdict(success=True, timed_out=True)


class TestDiagnosticParsing:
    def test_single_error(self):
        out = "Main.lean:3:7: error: unknown identifier 'Nat.gdc'"
        diags = parse_diagnostics(out)
        assert diags == (Diagnostic(severity="error", line=3, column=7,
                                    message="unknown identifier 'Nat.gdc'"),)

    def test_continuation_lines_attach(self):
        out = ("Main.lean:1:0: error: type mismatch\n"
               "  expected ℕ\n"
               "  got ℝ\n"
               "Main.lean:5:2: warning: unused variable")
        diags = parse_diagnostics(out)
        assert len(diags) == 2
        assert "expected ℕ" in diags[0].message
        assert diags[1].severity == "warning"

    def test_no_file_prefix(self):
        diags = parse_diagnostics("2:4: error: oops")
        assert diags[0].line == 2 and diags[0].column == 4

    def test_unparsed_output_degrades_gracefully(self):
        diags = parse_diagnostics("PANIC: out of memory")
        assert len(diags) == 1
        assert diags[0].severity == "info"
        assert "unparsed output" in diags[0].message

    def test_empty_output(self):
        assert parse_diagnostics("") == ()


class TestUnknownIdentifiers:
    def diag(self, message):
        return Diagnostic(severity="error", line=1, column=0, message=message)

    def test_single(self):
        diags = [self.diag("unknown identifier 'Nat.gdc'")]
        assert extract_unknown_identifiers(diags) == ["Nat.gdc"]

    def test_unknown_constant(self):
        diags = [self.diag("unknown constant 'Real.exp_logg'")]
        assert extract_unknown_identifiers(diags) == ["Real.exp_logg"]

    def test_empty(self):
        assert extract_unknown_identifiers([]) == []

    def test_two_in_order_deduplicated(self):
        diags = [self.diag("unknown identifier 'Foo.bar'"),
                 self.diag("unknown identifier 'Baz.qux'"),
                 self.diag("unknown identifier 'Foo.bar'")]
        assert extract_unknown_identifiers(diags) == ["Foo.bar", "Baz.qux"]


GOAL = "theorem t : (69 : ℕ) = 69 := by\n  sorry\n"


def table_for(goal, winning_tactic):
    """Mock table where exactly one cascade tactic closes the goal."""
    table = {}
    for tactic in TACTIC_CASCADE:
        source = fill_proof_hole(goal, tactic)
        if tactic == winning_tactic:
            table[source_digest(source)] = {"success": True,
                                            "winning_tactic": tactic}
        else:
            table[source_digest(source)] = {
                "success": False,
                "diagnostics": [{"severity": "error", "line": 1, "column": 0,
                                 "message": f"tactic '{tactic}' failed"}]}
    return table


class TestCascade:
    def test_identity_goal_closed_by_norm_num(self):
        verifier = MockVerifier(table_for(GOAL, "norm_num"))
        outcome = cascade_prove(GOAL, verifier, timeout_s=120)
        assert outcome.winning_tactic == "norm_num"
        assert [t for t, _ in outcome.attempts] == list(TACTIC_CASCADE)

    def test_stops_at_first_success(self):
        verifier = MockVerifier(table_for(GOAL, "simp"))
        outcome = cascade_prove(GOAL, verifier, timeout_s=120)
        assert outcome.winning_tactic == "simp"
        assert len(outcome.attempts) == 1

    def test_all_fail_records_five_attempts(self):
        verifier = MockVerifier(table_for(GOAL, winning_tactic=None))
        outcome = cascade_prove(GOAL, verifier, timeout_s=120)
        assert outcome.winning_tactic is None
        assert len(outcome.attempts) == 5

    def test_attempt_count_equals_winner_index(self):
        for i, tactic in enumerate(TACTIC_CASCADE):
            verifier = MockVerifier(table_for(GOAL, tactic))
            outcome = cascade_prove(GOAL, verifier, timeout_s=120)
            assert len(outcome.attempts) == i + 1

    def test_requires_single_hole(self):
        with pytest.raises(ValueError, match="exactly one proof hole"):
            cascade_prove("theorem t : sorry = sorry := sorry",
                          MockVerifier({}), timeout_s=1)

    def test_chained_mode_single_attempt(self):
        chained_source = fill_proof_hole(GOAL, "; ".join(TACTIC_CASCADE))
        verifier = MockVerifier({source_digest(chained_source): {"success": True}})
        outcome = cascade_prove(GOAL, verifier, timeout_s=120, chained=True)
        assert outcome.winning_tactic == "; ".join(TACTIC_CASCADE)


class TestMockVerifier:
    def test_missing_entry_is_explicit(self):
        with pytest.raises(MissingVerdictError, match=source_digest("x")):
            MockVerifier({}).check("x", timeout_s=1)

    def test_round_trips_file(self, tmp_path):
        path = tmp_path / "table.json"
        recorder = RecordingVerifier(
            MockVerifier({source_digest("src"): {"success": True}}), str(path))
        verdict = recorder.check("src", timeout_s=1)
        assert verdict.success
        replayed = MockVerifier.from_file(str(path))
        assert replayed.check("src", timeout_s=1).success


class FakeCounter:
    def __init__(self):
        self.calls = 0

    def check(self, source, timeout_s):
        self.calls += 1
        return LeanVerdict(success=True)


class TestCaching:
    def test_identical_checks_hit_cache(self):
        inner = FakeCounter()
        verifier = CachingVerifier(inner)
        verifier.check("theorem t : 1 = 1 := rfl", 10)
        verifier.check("theorem t : 1 = 1 := rfl", 10)
        assert inner.calls == 1
        assert verifier.hits == 1 and verifier.misses == 1

    def test_distinct_sources_miss(self):
        inner = FakeCounter()
        verifier = CachingVerifier(inner)
        verifier.check("a", 10)
        verifier.check("b", 10)
        assert inner.calls == 2
