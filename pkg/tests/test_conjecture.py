import json

import pytest
from hypothesis import given, settings, strategies as st

from ecp.conjecture import (ConjectureConfig, TrivialityVerdict, conjecture,
                            goal_predicate_tokens, tokenize, triviality_check)
from ecp.gateway import BackendConfig, ChatMessage, ScriptedBackend
from ecp.leanbridge import Diagnostic, LeanVerdict
from ecp.tasks import parse_record

CFG = BackendConfig(model_id="conjecturer")

FORMAL = ("import Mathlib\n\n"
          "abbrev test_answer : Set (ℕ × ℕ) := sorry\n\n"
          "theorem test (x y : ℕ) (hpos : 0 < x ∧ 0 < y) :\n"
          "    x ^ 3 + y ^ 3 = x ^ 2 + 42 * x * y + y ^ 2 ↔ "
          "(x, y) ∈ test_answer := by\n  sorry\n")

LEGAL = "{(7, 1), (1, 7), (22, 22)}"
ILLEGAL = "{(x,y) : ℕ × ℕ | x ^ 3 + y ^ 3 = x ^ 2 + 42 * x * y + y ^ 2}"


def make_task():
    return parse_record(json.dumps({
        "id": "test", "informal": "Find all pairs.", "formal": FORMAL,
        "answer_name": "test_answer", "answer_type": "Set (ℕ × ℕ)",
        "ground_truth": LEGAL,
    })).task


class TestTrivialityCheck:
    def test_finite_set_literal_legal(self):
        verdict = triviality_check(make_task(), LEGAL)
        assert verdict == TrivialityVerdict(legal=True, reason="ok")

    def test_verbatim_set_builder_illegal(self):
        verdict = triviality_check(make_task(), ILLEGAL)
        assert verdict == TrivialityVerdict(legal=False,
                                            reason="echoes_predicate")

    def test_sorry_rejected(self):
        verdict = triviality_check(make_task(), "sorry")
        assert verdict.reason == "contains_sorry"

    def test_classical_choose_rejected(self):
        verdict = triviality_check(make_task(), "Classical.choose hpos")
        assert verdict.reason == "contains_choice"

    def test_hypothesis_reference_rejected(self):
        verdict = triviality_check(make_task(), "if hpos then 1 else 0")
        assert verdict.reason == "references_hypotheses"

    def test_value_binder_name_reuse_is_fine(self):
        # `fun x => ...` may shadow the theorem's value binders
        formal = ("import Mathlib\n\nabbrev f_answer : ℕ → ℕ := sorry\n\n"
                  "theorem f (n : ℕ) : n + n = f_answer n := by sorry\n")
        task = parse_record(json.dumps({
            "id": "f", "informal": "double", "formal": formal,
            "answer_name": "f_answer", "answer_type": "ℕ → ℕ"})).task
        assert triviality_check(task, "fun n => 2 * n").legal

    def test_invariant_under_whitespace(self):
        squeezed = ILLEGAL.replace(" ", "")
        assert triviality_check(make_task(), squeezed).reason == "echoes_predicate"
        spaced = ILLEGAL.replace("=", "  =  ")
        assert triviality_check(make_task(), spaced).reason == "echoes_predicate"

    def test_invariant_under_bound_variable_renaming(self):
        renamed = ("{(a,b) : ℕ × ℕ | a ^ 3 + b ^ 3 = "
                   "a ^ 2 + 42 * a * b + b ^ 2}")
        assert triviality_check(make_task(), renamed).reason == "echoes_predicate"

    def test_legal_verdict_invariant_under_whitespace(self):
        assert triviality_check(make_task(), LEGAL.replace(" ", "")).legal

    def test_genuinely_different_set_builder_is_legal(self):
        other = "{(a, b) : ℕ × ℕ | a = 7 ∧ b = 1}"
        assert triviality_check(make_task(), other).legal

    def test_echo_of_set_equation_goal(self):
        # the goal itself binds the set variable; a verbatim echo must still
        # be rejected even though the binder is not a theorem binder
        formal = ("import Mathlib\n\n"
                  "abbrev s_answer : Set ℤ := sorry\n\n"
                  "theorem s : {x : ℤ | x ^ 2 = 4} = s_answer := by\n  sorry\n")
        task = parse_record(json.dumps({
            "id": "s", "informal": "Solve x^2 = 4.", "formal": formal,
            "answer_name": "s_answer", "answer_type": "Set ℤ"})).task
        assert triviality_check(task, "{x : ℤ | x ^ 2 = 4}").reason == \
            "echoes_predicate"
        assert triviality_check(task, "{2, -2}").legal

    def test_total_function_no_raise(self):
        for expr in ["]", "{", "((", "λ", "{|}"]:
            triviality_check(make_task(), expr)


class TestGoalTokens:
    def test_placeholder_dropped_binders_canonical(self):
        tokens = goal_predicate_tokens(make_task())
        assert "test_answer" not in tokens
        assert "□0" in tokens and "□1" in tokens

    def test_tokenize_collapses_whitespace(self):
        assert tokenize("a  +\n b") == tokenize("a + b")


class FakeLean:
    """Compile probe verifier: sources containing BAD fail, others succeed."""

    def __init__(self):
        self.checked = []

    def check(self, source, timeout_s):
        self.checked.append(source)
        if "BAD" in source:
            return LeanVerdict(success=False, diagnostics=(
                Diagnostic(severity="error", line=1, column=0,
                           message="unknown identifier 'BAD'"),))
        return LeanVerdict(success=True)


def reply(expr):
    return ChatMessage(role="assistant", content=f"Answer:\n```lean\n{expr}\n```")


class TestConjectureLoop:
    def config(self):
        return ConjectureConfig()

    def test_legal_compiling_candidate_accepted(self):
        backend = ScriptedBackend([reply(LEGAL)])
        out = conjecture(make_task(), ["(7, 1)"], backend, FakeLean(),
                         self.config(), CFG)
        assert out.candidate is not None
        assert out.candidate.expression == LEGAL
        assert out.candidate.compiled == "yes"
        assert out.attempts_used == 1

    def test_echo_rejected_then_retry(self):
        backend = ScriptedBackend([reply(ILLEGAL), reply(LEGAL)])
        out = conjecture(make_task(), [], backend, FakeLean(),
                         self.config(), CFG)
        assert out.candidate is not None and out.attempts_used == 2
        assert out.rejected[0]["reason"] == "echoes_predicate"

    def test_compile_failure_feeds_diagnostics(self):
        backend = ScriptedBackend([reply("BAD"), reply(LEGAL)])
        lean = FakeLean()
        out = conjecture(make_task(), [], backend, lean, self.config(), CFG)
        assert out.candidate is not None
        assert out.rejected[0]["reason"] == "compile_error"
        assert "unknown identifier" in out.rejected[0]["diagnostics"]

    def test_budget_exhaustion(self):
        backend = ScriptedBackend([reply(ILLEGAL)] * 5)
        out = conjecture(make_task(), [], backend, FakeLean(),
                         self.config(), CFG)
        assert out.candidate is None
        assert out.attempts_used == 5

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.sampled_from(["legal", "echo", "bad"]),
                    min_size=1, max_size=10))
    def test_budget_invariant(self, script):
        exprs = {"legal": LEGAL, "echo": ILLEGAL, "bad": "BAD"}
        replies = [reply(exprs[s]) for s in script] + [reply(ILLEGAL)] * 10
        out = conjecture(make_task(), [], ScriptedBackend(replies),
                         FakeLean(), ConjectureConfig(), CFG)
        assert out.attempts_used <= 5
        if out.candidate is not None:
            assert out.candidate.compiled == "yes"
            assert triviality_check(make_task(), out.candidate.expression).legal

    def test_hints_included_in_prompt(self):
        prompts = []

        def script(messages, config, tag):
            prompts.append(messages[-1].content)
            return reply(LEGAL)

        conjecture(make_task(), ["(7, 1)", "(1, 7)"], ScriptedBackend(script),
                   FakeLean(), self.config(), CFG)
        assert "(7, 1)" in prompts[0]

    def test_no_hints_omitted_from_prompt(self):
        prompts = []

        def script(messages, config, tag):
            prompts.append(messages[-1].content)
            return reply(LEGAL)

        conjecture(make_task(), [], ScriptedBackend(script), FakeLean(),
                   self.config(), CFG)
        assert "hint" not in prompts[0].lower()
