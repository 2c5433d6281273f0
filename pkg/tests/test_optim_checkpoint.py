import numpy as np
import pytest

from rewriter_evaluator.autodiff import backward, parameter
from rewriter_evaluator.checkpoint import load_arrays, save_arrays
from rewriter_evaluator.errors import ShapeError
from rewriter_evaluator.optim import RMSProp, RmsPropState, rmsprop_step


class TestRmsProp:
    def test_matches_hand_update(self):
        p = parameter(np.array([1.0, -2.0]))
        state = RmsPropState(lr=0.1, decay=0.9, eps=1e-8)
        g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.2])
        rmsprop_step({"p": p}, {"p": g1}, state)
        ms = 0.1 * g1**2
        expect = np.array([1.0, -2.0]) - 0.1 * g1 / np.sqrt(ms + 1e-8)
        np.testing.assert_allclose(p.data, expect, rtol=0, atol=1e-15)
        rmsprop_step({"p": p}, {"p": g2}, state)
        ms = 0.9 * ms + 0.1 * g2**2
        expect = expect - 0.1 * g2 / np.sqrt(ms + 1e-8)
        np.testing.assert_allclose(p.data, expect, rtol=0, atol=1e-15)
        assert state.steps == 2

    def test_missing_gradient_only_decays(self):
        p = parameter(np.array([3.0]))
        state = RmsPropState(lr=0.1, decay=0.5)
        rmsprop_step({"p": p}, {"p": np.array([2.0])}, state)
        before, ms = p.data.copy(), state.mean_sq["p"].copy()
        rmsprop_step({"p": p}, {}, state)
        np.testing.assert_array_equal(p.data, before)
        np.testing.assert_allclose(state.mean_sq["p"], 0.5 * ms)

    def test_shape_mismatch(self):
        p = parameter(np.zeros(2))
        with pytest.raises(ShapeError):
            rmsprop_step({"p": p}, {"p": np.zeros(3)}, RmsPropState())

    def test_minimizes_quadratic(self):
        p = parameter(np.array([4.0, -3.0]))
        opt = RMSProp({"p": p}, lr=0.05)
        for _ in range(400):
            opt.zero_grad()
            backward((p * p).sum())
            opt.step()
        assert np.abs(p.data).max() < 0.1

    def test_clipping_scales_gradient(self):
        p = parameter(np.zeros(2))
        opt = RMSProp({"p": p}, lr=1.0, decay=0.0, eps=0.0, clip_norm=1.0)
        p.grad = np.array([30.0, 40.0])
        opt.step()
        # decay 0 makes the step g / |g| elementwise: sign only
        np.testing.assert_allclose(p.data, [-1.0, -1.0])


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path, rng):
        arrays = {"a": rng.normal(size=(3, 4)), "b": np.array(1.0 / 3.0), "c": np.zeros(0)}
        save_arrays(tmp_path / "x.ckpt", arrays, {"k": [1, 2]})
        loaded, meta = load_arrays(tmp_path / "x.ckpt")
        assert meta == {"k": [1, 2]}
        for k, v in arrays.items():
            assert loaded[k].shape == v.shape
            np.testing.assert_array_equal(loaded[k], v)

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x").write_text("hello\n")
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_arrays(tmp_path / "x")

    def test_rejects_truncated_values(self, tmp_path):
        save_arrays(tmp_path / "x", {"a": np.ones((2, 2))})
        text = (tmp_path / "x").read_text().rsplit(" ", 1)[0] + "\n"
        (tmp_path / "x").write_text(text)
        with pytest.raises(ValueError, match="values for shape"):
            load_arrays(tmp_path / "x")

    def test_rejects_whitespace_names(self, tmp_path):
        with pytest.raises(ValueError):
            save_arrays(tmp_path / "x", {"a b": np.ones(1)})
