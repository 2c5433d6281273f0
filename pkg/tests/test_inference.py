import numpy as np
import pytest
from hypothesis import given, strategies as st

from rewriter_evaluator.bleu import sentence_bleu
from rewriter_evaluator.errors import ContractViolation
from rewriter_evaluator.inference import (
    RewriteTrace,
    StoppingPolicy,
    evaluate_policies,
    format_line,
    parse_line,
    rewrite_passes,
    select,
    threshold_decision,
    translate,
)
from rewriter_evaluator.decoding import Hypothesis


class ScriptedModel:
    """Each pass appends one token of the reference; scores follow a script."""

    def __init__(self, script):
        self.script = script  # source word -> list of scores per pass
        self.calls = 0

    def rewrite(self, xs, drafts, beam_size=1):
        self.calls += len(xs)
        return [Hypothesis(list(z) + [f"t{len(z)}"], 0.0, True) for z in drafts]

    def evaluate(self, xs, zs):
        return np.array([self.script[x[0]][len(z) - 1] for x, z in zip(xs, zs)])


def scores_strategy():
    return st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6)


class TestThreshold:
    def test_examples(self):
        assert threshold_decision([0.5, 0.7, 0.6], 0.01) == (3, 2, "threshold")
        assert threshold_decision([0.5, 0.7, 0.695], 0.01) == (3, 3, "max-passes")
        assert threshold_decision([0.1], 0.0) == (1, 1, "max-passes")

    @given(scores_strategy(), st.floats(0, 1))
    def test_decision_contract(self, qs, delta):
        k_stop, chosen, reason = threshold_decision(qs, delta)
        drops = [k for k in range(1, len(qs)) if qs[k] + delta < qs[k - 1]]
        if drops:
            assert (reason, k_stop, chosen) == ("threshold", drops[0] + 1, drops[0])
        else:
            assert (reason, k_stop, chosen) == ("max-passes", len(qs), len(qs))


class TestSelect:
    drafts = [("a",), ("a", "b"), ("a", "b"), ("x",)]

    def test_argmax_first_of_ties(self):
        t = select(self.drafts, [0.1, 0.9, 0.9, 0.2], StoppingPolicy("argmax"))
        assert t.chosen == 2 and t.fixed_points == [False, False, True, False]

    def test_oracle_uses_reference(self):
        t = select(self.drafts, [0, 0, 0, 0], StoppingPolicy("oracle"), reference=["x"])
        assert t.final == ("x",)
        with pytest.raises(ContractViolation):
            select(self.drafts, [0, 0, 0, 0], StoppingPolicy("oracle"))

    def test_fixed(self):
        assert select(self.drafts, [0, 0, 0, 0], StoppingPolicy.parse("fixed:3")).chosen == 3

    def test_threshold_truncates(self):
        t = select(self.drafts, [0.5, 0.4, 0.9, 1.0], StoppingPolicy("threshold", 0.01))
        assert (t.k_stop, t.chosen, t.stop_reason) == (2, 1, "threshold")

    @given(scores_strategy(), st.data())
    def test_oracle_ge_argmax_ge_min_fixed(self, qs, data):
        drafts = [tuple(data.draw(st.lists(st.sampled_from("abc"), min_size=1, max_size=4))) for _ in qs]
        ref = ["a", "b", "c"]
        bleu = lambda t: sentence_bleu(t.final, ref).value
        pol = lambda m: StoppingPolicy(m, 0.01, len(qs))
        oracle, arg = bleu(select(drafts, qs, pol("oracle"), ref)), bleu(select(drafts, qs, pol("argmax")))
        fixed = [bleu(select(drafts, qs, StoppingPolicy("fixed", 0.01, len(qs), k))) for k in range(1, len(qs) + 1)]
        assert oracle >= arg >= min(fixed)
        assert oracle == max(fixed)


class TestPolicyParse:
    @pytest.mark.parametrize("text", ["fixed:0", "fixed:x", "fixed:9", "beam"])
    def test_invalid(self, text):
        with pytest.raises(ContractViolation):
            StoppingPolicy.parse(text, max_k=4)

    def test_passes(self):
        assert StoppingPolicy.parse("fixed:2").passes == 2
        assert StoppingPolicy.parse("argmax", max_k=6).passes == 6
        assert str(StoppingPolicy.parse("fixed:2")) == "fixed:2"


class TestLoop:
    script = {"u": [0.1, 0.5, 0.3, 0.9], "v": [0.2, 0.3, 0.4, 0.5]}

    def test_threshold_stops_per_sentence(self):
        m = ScriptedModel(self.script)
        traces = translate(m, [["u"], ["v"]], StoppingPolicy("threshold", 0.01, 4))
        assert [(t.k_stop, t.chosen, t.stop_reason) for t in traces] == [(3, 2, "threshold"), (4, 4, "max-passes")]
        assert m.calls == 3 + 4
        assert traces[0].final == ("t0", "t1")

    def test_full_passes_without_delta(self):
        drafts, scores = rewrite_passes(ScriptedModel(self.script), [["u"]], 4)
        assert scores == [self.script["u"]]
        assert len(drafts[0]) == 4

    def test_evaluate_policies(self):
        refs = [["t0", "t1"], ["t0", "t1", "t2", "t3"]]
        rep = evaluate_policies(ScriptedModel(self.script), [["u"], ["v"]], refs, 4)
        assert set(rep.bleu) == {"fixed:1", "fixed:2", "fixed:3", "fixed:4", "argmax", "threshold", "oracle"}
        assert rep.mean_chosen["argmax"] == 4.0
        assert rep.mean_chosen["threshold"] == 3.0
        assert rep.bleu["oracle"] == pytest.approx(1.0)
        assert rep.per_pass == [rep.bleu[f"fixed:{k}"] for k in range(1, 5)]

    def test_rejects_empty_source(self):
        with pytest.raises(ContractViolation):
            translate(ScriptedModel(self.script), [[]], StoppingPolicy())


class TestOutputFormat:
    def test_round_trip(self):
        t = RewriteTrace([("a",), ("a", "b")], [0.25, -1.5], "threshold", 1)
        line = format_line(t)
        assert line == "a\tthreshold\t1\t0.25 -1.5"
        assert parse_line(line) == (["a"], "threshold", 1, [0.25, -1.5])

    def test_bad_line(self):
        with pytest.raises(ValueError):
            parse_line("a\tb")
