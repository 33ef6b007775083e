import numpy as np
import pytest

from rae.model import (
    ModelError,
    RAEModel,
    encode,
    gradients,
    init_model,
    load_model,
    loss,
    reconstruct,
    save_model,
)


def random_model(rng, n, m, scale=0.5):
    return RAEModel(rng.standard_normal((m, n)) * scale, rng.standard_normal((n, m)) * scale)


def brute_force_loss(enc, dec, x, lam):
    """Scalar-by-scalar recomputation of batch-mean error plus penalty."""
    m, n = len(enc), len(enc[0])
    total = 0.0
    for row in x:
        z = [sum(enc[i][j] * row[j] for j in range(n)) for i in range(m)]
        for j in range(n):
            xh = sum(dec[j][i] * z[i] for i in range(m))
            total += (xh - row[j]) ** 2
    reg = sum(v * v for r in enc for v in r) + sum(v * v for r in dec for v in r)
    return total / len(x), lam * reg


def finite_difference(model, x, lam, reg_mode, h=1e-5):
    """Central differences of the objective each reg_mode differentiates."""
    def objective(enc, dec):
        value = loss(RAEModel(enc, dec), x, lam)
        return value.total if reg_mode == "in_loss" else value.reconstruction

    grads = []
    for which in ("encoder", "decoder"):
        base = getattr(model, which)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += h
            minus[idx] -= h
            args_p = (plus, model.decoder) if which == "encoder" else (model.encoder, plus)
            args_m = (minus, model.decoder) if which == "encoder" else (model.encoder, minus)
            g[idx] = (objective(*args_p) - objective(*args_m)) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


class TestInit:
    def test_deterministic(self):
        a, b = init_model(10, 3, 5), init_model(10, 3, 5)
        np.testing.assert_array_equal(a.encoder, b.encoder)
        np.testing.assert_array_equal(a.decoder, b.decoder)
        assert not np.array_equal(a.encoder, init_model(10, 3, 6).encoder)

    def test_shapes_and_bounds(self):
        model = init_model(4, 2, 0)
        assert model.encoder.shape == (2, 4) and model.decoder.shape == (4, 2)
        assert np.all(np.abs(model.encoder) <= 0.5) and np.all(np.abs(model.decoder) <= 2 ** -0.5)

    def test_rejects_m_ge_n(self):
        for n, m in ((4, 4), (3, 5), (4, 0)):
            with pytest.raises(ModelError):
                init_model(n, m, 0)

    def test_entry_mean_monte_carlo(self):
        model = init_model(1000, 100, 1)  # 1e5 encoder entries on [-1/sqrt(1000), 1/sqrt(1000)]
        bound = 1 / np.sqrt(1000)
        sigma = bound / np.sqrt(3)
        assert abs(model.encoder.mean()) < 3 * sigma / np.sqrt(1e5)


class TestForward:
    def test_truncation_encoder(self):
        enc = np.hstack([np.eye(2), np.zeros((2, 3))])
        model = RAEModel(enc, np.zeros((5, 2)))
        x = np.arange(10.0).reshape(2, 5)
        np.testing.assert_array_equal(encode(model, x), x[:, :2])

    def test_single_vector_equals_batch_of_one(self):
        model = random_model(np.random.default_rng(0), 6, 3)
        x = np.random.default_rng(1).standard_normal(6)
        np.testing.assert_array_equal(encode(model, x), encode(model, x[None, :]))

    def test_matches_matmul(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 7, 3)
        x = rng.standard_normal((5, 7))
        np.testing.assert_allclose(encode(model, x), (model.encoder @ x.T).T, atol=1e-12)
        np.testing.assert_allclose(reconstruct(model, x), (model.decoder @ model.encoder @ x.T).T, atol=1e-12)

    def test_orthogonal_projection(self):
        q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((6, 2)))
        model = RAEModel(q.T, q)
        x = np.random.default_rng(4).standard_normal((3, 6))
        np.testing.assert_allclose(reconstruct(model, x), x @ q @ q.T, atol=1e-12)

    def test_zero_input(self):
        model = random_model(np.random.default_rng(5), 4, 2)
        np.testing.assert_array_equal(reconstruct(model, np.zeros((2, 4))), np.zeros((2, 4)))

    def test_shape_mismatch(self):
        model = random_model(np.random.default_rng(5), 4, 2)
        with pytest.raises(ModelError):
            encode(model, np.zeros((2, 5)))

    def test_encode_linearity(self):
        rng = np.random.default_rng(6)
        model = random_model(rng, 8, 3)
        x, y = rng.standard_normal(8), rng.standard_normal(8)
        np.testing.assert_allclose(
            encode(model, 1.7 * x - 0.3 * y), 1.7 * encode(model, x) - 0.3 * encode(model, y), atol=1e-10
        )


class TestLoss:
    def test_fixed_point_has_zero_reconstruction(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 2)))
        model = RAEModel(q.T, q)
        x = (q @ np.random.default_rng(1).standard_normal((2, 4))).T  # rows in the column space
        assert loss(model, x, 0.0).reconstruction == pytest.approx(0.0, abs=1e-24)

    def test_zero_weights(self):
        model = RAEModel(np.zeros((2, 4)), np.zeros((4, 2)))
        x = np.random.default_rng(2).standard_normal((3, 4))
        value = loss(model, x, 7.0)
        assert value.regularization == 0.0
        assert value.total == pytest.approx(np.mean(np.sum(x * x, axis=1)), rel=1e-14)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, 4, 2)
        x = rng.standard_normal((3, 4))
        value = loss(model, x, 0.3)
        recon, reg = brute_force_loss(model.encoder.tolist(), model.decoder.tolist(), x.tolist(), 0.3)
        assert value.reconstruction == pytest.approx(recon, rel=1e-12)
        assert value.regularization == pytest.approx(reg, rel=1e-12)
        assert value.total == pytest.approx(value.reconstruction + value.regularization, abs=1e-12)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ModelError):
            loss(init_model(3, 1, 0), np.ones((1, 3)), -1.0)

    def test_reparametrization_invariance(self):
        rng = np.random.default_rng(4)
        model = random_model(rng, 6, 3)
        u = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        moved = RAEModel(u @ model.encoder, model.decoder @ np.linalg.inv(u))
        x = rng.standard_normal((5, 6))
        assert loss(moved, x, 0.0).total == pytest.approx(loss(model, x, 0.0).total, rel=1e-10)
        assert loss(moved, x, 0.5).total != pytest.approx(loss(model, x, 0.5).total, rel=1e-6)


class TestGradients:
    def test_zero_weights_give_zero_reconstruction_gradient(self):
        model = RAEModel(np.zeros((2, 5)), np.zeros((5, 2)))
        g_e, g_d = gradients(model, np.random.default_rng(0).standard_normal((4, 5)), 0.0)
        assert not g_e.any() and not g_d.any()

    def test_pure_regularizer(self):
        model = random_model(np.random.default_rng(1), 5, 2)
        g_e, g_d = gradients(model, np.zeros((3, 5)), 0.25, "in_loss")
        np.testing.assert_array_equal(g_e, 0.5 * model.encoder)
        np.testing.assert_array_equal(g_d, 0.5 * model.decoder)

    @pytest.mark.parametrize("reg_mode", ["in_loss", "decoupled"])
    def test_finite_differences_small_case(self, reg_mode):
        rng = np.random.default_rng(2)
        model = random_model(rng, 3, 2)
        x = rng.standard_normal((4, 3))
        analytic = gradients(model, x, 0.1, reg_mode)
        numeric = finite_difference(model, x, 0.1, reg_mode)
        for a, b in zip(analytic, numeric):
            assert max_relative_error(a, b) < 1e-5

    def test_unknown_mode(self):
        with pytest.raises(ModelError):
            gradients(init_model(3, 1, 0), np.ones((1, 3)), 0.0, "l1")


class TestPersistence:
    def test_round_trip(self, tmp_path):
        model = RAEModel(init_model(6, 2, 3).encoder, init_model(6, 2, 3).decoder, {"lam": 0.1})
        path = tmp_path / "m.rae"
        save_model(model, path)
        raw = path.read_bytes()
        assert raw.startswith(b"RAEDR1\n")
        back = load_model(path)
        np.testing.assert_array_equal(back.encoder, model.encoder)
        np.testing.assert_array_equal(back.decoder, model.decoder)
        assert back.provenance == {"lam": 0.1}

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.rae"
        path.write_bytes(b"NOTRAE\n{}\n")
        with pytest.raises(ModelError, match="magic"):
            load_model(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.rae"
        save_model(init_model(6, 2, 0), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ModelError, match="truncated"):
            load_model(path)

    def test_bad_shape_header(self, tmp_path):
        path = tmp_path / "m.rae"
        path.write_bytes(b'RAEDR1\n{"n": 2, "m": 3, "config": null}\n')
        with pytest.raises(ModelError, match="invalid shape"):
            load_model(path)
