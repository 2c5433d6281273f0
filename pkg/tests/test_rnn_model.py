import numpy as np
import pytest

from rewriter_evaluator import autodiff as ad
from rewriter_evaluator.autodiff import Tensor, parameter
from rewriter_evaluator.gradcheck import gradient_check
from rewriter_evaluator.nn import GRUCell, gru_step
from rewriter_evaluator.optim import RMSProp
from rewriter_evaluator.rnn_model import GRURewriterEvaluator
from rewriter_evaluator.vocab import Vocabulary

VOCAB = Vocabulary(["a", "b", "c", "d"])


def tiny(**kw):
    return GRURewriterEvaluator(VOCAB, hidden=4, seed=3, **kw)


class TestGRUStep:
    def test_fused_matches_composed(self, rng):
        cell = GRUCell(rng, 3, 4)
        x, h = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))
        gi = cell.input_proj(Tensor(x))
        np.testing.assert_allclose(cell.step(gi, Tensor(h)).data, cell.step_reference(gi, Tensor(h)).data, atol=1e-14)

    def test_fused_gradient(self, rng):
        gi, h = parameter(rng.normal(size=(2, 12))), parameter(rng.normal(size=(2, 4)))
        U, b = parameter(rng.normal(size=(4, 12))), parameter(rng.normal(size=12))
        w = rng.normal(size=(2, 4))
        rep = gradient_check(lambda: (gru_step(gi, h, U, b) * w).sum(), dict(gi=gi, h=h, U=U, b=b), 1e-5)
        assert rep.passed, rep.per_param


class TestModel:
    @pytest.mark.parametrize("share", [True, False])
    def test_full_gradient(self, share):
        m = tiny(share_encoders=share)
        xs, prev, ys, new = [["a", "b"], ["c"]], [["b", "zz"], []], [["b", "a"], ["c", "c"]], [["a"], ["d", "zz"]]

        def loss():
            rw, hg = m.training_losses(xs, prev, ys, new)
            return rw.sum() + hg.sum()

        # the summed loss is O(10), so near-zero entries carry ~1e-10 roundoff
        rep = gradient_check(loss, m.named_parameters(), tolerance=1e-4, floor=1e-4)
        assert rep.passed, rep.max_rel_error

    def test_padding_invariance(self):
        m = tiny()
        xs = [["a", "b", "c", "d"], ["a"], ["c", "b"]]
        prev = [["b"], ["a", "b", "c", "zz"], []]
        ys = [["d", "c", "b", "a"], ["a"], ["b", "c", "c"]]
        batched = m.rewrite_losses(xs, prev, ys).data
        single = [m.rewrite_loss(x, z, y).item() for x, z, y in zip(xs, prev, ys)]
        np.testing.assert_allclose(batched, single, atol=1e-12)
        np.testing.assert_allclose(m.evaluate(xs, ys), [m.evaluate([x], [y])[0] for x, y in zip(xs, ys)], atol=1e-12)

    def test_session_distribution_normalized(self):
        m = tiny()
        s = m.session([["a"], ["b", "c"]], [["zz", "a"], []])
        p = s.step(np.array([VOCAB.sos_id] * 2))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert p.shape[1] == len(VOCAB) + 1
        assert p[1, len(VOCAB)] == 0.0  # the second row has no OOV to copy
        assert p[:, VOCAB.pad_id].max() == 0.0 and p[:, VOCAB.sos_id].max() == 0.0

    def test_copy_off_ignores_draft_tokens(self):
        m = tiny(copy=False)
        p = m.session([["a"]], [["zz"]]).step(np.array([VOCAB.sos_id]))
        assert p[0, len(VOCAB)] == 0.0
        with np.errstate(divide="ignore"):
            assert np.isinf(m.rewrite_loss(["a"], ["zz"], ["zz"]).item())

    def test_oov_copy_is_learnable(self):
        m = tiny()
        opt = RMSProp(m.named_parameters(), lr=0.05)
        for _ in range(150):
            opt.zero_grad()
            ad.backward(m.rewrite_losses([["a"], ["b"]], [["qq"], ["rr"]], [["qq"], ["rr"]]).sum())
            opt.step()
        out = [h.tokens for h in m.greedy_decode([["a"], ["b"]], [["qq"], ["rr"]])]
        assert out == [["qq"], ["rr"]]

    def test_learns_reversal(self):
        m = GRURewriterEvaluator(VOCAB, hidden=16, seed=0)
        opt = RMSProp(m.named_parameters(), lr=0.01)
        pairs = [(["a", "b", "c"], ["c", "b", "a"]), (["d", "a"], ["a", "d"]), (["b", "d", "c"], ["c", "d", "b"])]
        xs, ys = [p[0] for p in pairs], [p[1] for p in pairs]
        first = None
        for _ in range(200):
            opt.zero_grad()
            loss = m.rewrite_losses(xs, [[]] * 3, ys).sum()
            ad.backward(loss)
            opt.step()
            first = first if first is not None else loss.item()
        assert loss.item() < 0.1 * first
        assert [h.tokens for h in m.greedy_decode(xs, [[]] * 3)] == ys

    def test_config_round_trip(self):
        m = tiny(copy=False, share_encoders=False)
        cfg = dict(m.config())
        assert cfg.pop("backbone") == "gru"
        assert GRURewriterEvaluator(VOCAB, **cfg).config() == m.config()
