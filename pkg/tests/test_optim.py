import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rae.data import EmbeddingSet
from rae.model import loss
from rae.optim import (
    AdamState,
    TrainConfig,
    TrainingAborted,
    adam_update,
    cosine_lr,
    train,
)


def rank_two_data(seed, count=1000, noise=0.01):
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((2, 8))
    return EmbeddingSet(rng.standard_normal((count, 2)) @ directions + noise * rng.standard_normal((count, 8)))


class TestCosineLr:
    def test_endpoints(self):
        assert cosine_lr(0, 3000, 1e-3, 1e-5) == 1e-3
        assert cosine_lr(2999, 3000, 1e-3, 1e-5) == pytest.approx(1e-5, rel=1e-12)

    def test_midpoint(self):
        assert cosine_lr(50, 101, 1e-3, 1e-5) == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)

    def test_single_step(self):
        assert cosine_lr(0, 1, 1e-3, 1e-5) == 1e-3

    @pytest.mark.parametrize("step", [-1, 10])
    def test_out_of_range(self, step):
        with pytest.raises(ValueError):
            cosine_lr(step, 10, 1e-3, 1e-5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 5000))
    def test_monotone_non_increasing(self, total):
        lrs = [cosine_lr(s, total, 1e-3, 1e-5) for s in range(0, total, max(1, total // 50))]
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        p = np.array([[1.0, -2.0], [0.5, 3.0]])
        new, state = adam_update(p, np.zeros_like(p), AdamState.zeros_like(p), 1e-3)
        np.testing.assert_array_equal(new, p)
        assert state.step_count == 1

    def test_pure_decoupled_decay(self):
        p = np.array([[1.0, -2.0], [0.5, 3.0]])
        new, _ = adam_update(p, np.zeros_like(p), AdamState.zeros_like(p), 1e-2, lam=0.5)
        np.testing.assert_array_equal(new, p - 1e-2 * 0.5 * p)

    def test_in_loss_mode_adds_no_decay(self):
        p = np.array([[1.0, -2.0]])
        new, _ = adam_update(p, np.zeros_like(p), AdamState.zeros_like(p), 1e-2, lam=0.5, reg_mode="in_loss")
        np.testing.assert_array_equal(new, p)

    def test_two_scalar_steps_match_hand_recurrence(self):
        lr, lam, b1, b2, eps = 0.1, 0.01, 0.9, 0.999, 1e-8
        p0, g1, g2 = 1.0, 0.5, -0.2
        # step 1
        m1 = (1 - b1) * g1
        v1 = (1 - b2) * g1 * g1
        p1 = p0 - lr * (m1 / (1 - b1)) / (math.sqrt(v1 / (1 - b2)) + eps)
        p1 = p1 - lr * lam * p1
        # step 2
        m2 = b1 * m1 + (1 - b1) * g2
        v2 = b2 * v1 + (1 - b2) * g2 * g2
        p2 = p1 - lr * (m2 / (1 - b1 ** 2)) / (math.sqrt(v2 / (1 - b2 ** 2)) + eps)
        p2 = p2 - lr * lam * p2

        p = np.array([[p0]])
        state = AdamState.zeros_like(p)
        p, state = adam_update(p, np.array([[g1]]), state, lr, lam)
        assert abs(p[0, 0] - p1) < 1e-12
        p, state = adam_update(p, np.array([[g2]]), state, lr, lam)
        assert abs(p[0, 0] - p2) < 1e-12
        assert state.step_count == 2
        assert np.all(state.second_moment >= 0)

    def test_shape_mismatch(self):
        p = np.zeros((2, 2))
        with pytest.raises(ValueError, match="shape mismatch"):
            adam_update(p, np.zeros((2, 3)), AdamState.zeros_like(p), 1e-3)

    def test_non_finite_gradient(self):
        p = np.zeros((1, 2))
        with pytest.raises(FloatingPointError):
            adam_update(p, np.array([[np.nan, 0.0]]), AdamState.zeros_like(p), 1e-3)

    def test_decay_contracts_norm_monotonically(self):
        p = np.random.default_rng(0).standard_normal((3, 4))
        state = AdamState.zeros_like(p)
        norms = [np.linalg.norm(p)]
        for _ in range(20):
            p, state = adam_update(p, np.zeros_like(p), state, 1e-2, lam=1.0)
            norms.append(np.linalg.norm(p))
        assert all(b < a for a, b in zip(norms, norms[1:]))


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"steps": 0},
            {"lam": -1.0},
            {"lr_min": 1e-2},
            {"beta1": 1.0},
            {"batch_size": 0},
            {"reg_mode": "l1"},
            {"seed": -1},
        ],
    )
    def test_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(latent_dim=2, **kwargs)

    def test_defaults(self):
        cfg = TrainConfig(latent_dim=2)
        assert (cfg.steps, cfg.batch_size, cfg.lr_max, cfg.lr_min) == (3000, 128, 1e-3, 1e-5)
        assert cfg.reg_mode == "decoupled"


class TestTrain:
    def test_one_step(self):
        data = rank_two_data(0, count=50)
        model, history = train(data, TrainConfig(2, steps=1, batch_size=10))
        assert len(history) == 1 and history.step == [0]
        assert history.lr == [1e-3]

    def test_bitwise_deterministic(self):
        data = rank_two_data(1, count=300)
        cfg = TrainConfig(2, lam=1e-3, steps=200, batch_size=32, seed=5)
        a, ha = train(data, cfg)
        b, hb = train(data, cfg)
        assert a.encoder.tobytes() == b.encoder.tobytes()
        assert a.decoder.tobytes() == b.decoder.tobytes()
        assert ha.to_csv() == hb.to_csv()
        c, _ = train(data, TrainConfig(2, lam=1e-3, steps=200, batch_size=32, seed=6))
        assert not np.array_equal(a.encoder, c.encoder)

    def test_history_csv(self):
        data = rank_two_data(2, count=40)
        _, history = train(data, TrainConfig(2, steps=7, batch_size=8))
        lines = history.to_csv().splitlines()
        assert lines[0] == "step,lr,total,recon,reg"
        assert len(lines) == 8
        assert [int(line.split(",")[0]) for line in lines[1:]] == list(range(7))

    def test_provenance_records_config(self):
        data = rank_two_data(2, count=40)
        model, _ = train(data, TrainConfig(2, lam=0.1, steps=3, batch_size=8))
        assert model.provenance["lam"] == 0.1 and model.provenance["steps"] == 3

    def test_rejects_bad_shapes(self):
        data = rank_two_data(3, count=20)
        with pytest.raises(ValueError):
            train(data, TrainConfig(8, steps=1, batch_size=4))
        with pytest.raises(ValueError):
            train(data, TrainConfig(2, steps=1, batch_size=21))

    @pytest.mark.parametrize("reg_mode", ["decoupled", "in_loss"])
    def test_rank_two_convergence(self, reg_mode):
        data = rank_two_data(0)
        model, history = train(data, TrainConfig(2, lam=1e-4, reg_mode=reg_mode))
        assert len(history) == 3000
        final = loss(model, data.vectors, 0.0).reconstruction
        assert final < 0.1 * history.recon[0]

    def test_loss_trend_without_regularization(self):
        data = rank_two_data(1)
        _, history = train(data, TrainConfig(2, lam=0.0))
        assert history.total[-1] < history.total[0]

    def test_divergence_aborts_with_step(self):
        data = EmbeddingSet(np.random.default_rng(0).standard_normal((64, 6)) * 1e200)
        with pytest.raises(TrainingAborted) as info:
            train(data, TrainConfig(2, steps=5, batch_size=16, lr_max=1e3, lr_min=1e3))
        assert info.value.step == 0 and "non-finite" in str(info.value)
