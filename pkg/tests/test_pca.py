import numpy as np
import pytest

from coughlab.errors import ConfigError, ShapeError
from coughlab.pca import PcaModel, covariance, export_scatter, export_variance, fit, reconstruct, transform


def _power_iteration(cov, iters=2000):
    """Leading eigenpair by power iteration, independent of LAPACK."""
    v = np.ones(cov.shape[0]) / np.sqrt(cov.shape[0])
    for _ in range(iters):
        w = cov @ v
        v = w / np.linalg.norm(w)
    return float(v @ cov @ v), v


def test_covariance_unbiased(rng):
    x = rng.standard_normal((50, 4))
    _, cov = covariance(x)
    np.testing.assert_allclose(cov, np.cov(x, rowvar=False, ddof=1), atol=1e-12)


def test_rank_one_data():
    rng = np.random.default_rng(3)
    direction = rng.standard_normal(42)
    x = np.outer(rng.standard_normal(500), direction) + 2.0
    model = fit(x, 3)
    assert model.explained_ratio[0] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(model.explained_ratio[1:], 0.0, atol=1e-9)
    u = direction / np.linalg.norm(direction)
    assert abs(model.components[0] @ u) == pytest.approx(1.0, abs=1e-9)


def test_isotropic_sample():
    x = np.random.default_rng(4).standard_normal((10000, 42))
    model = fit(x, 42)
    np.testing.assert_allclose(model.explained_ratio, 1 / 42, rtol=0.2)


def test_components_orthonormal_and_eigen(rng):
    x = rng.standard_normal((300, 42)) @ rng.standard_normal((42, 42))
    model = fit(x, 3)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(3), atol=1e-9)
    _, cov = covariance(x)
    norm = np.linalg.norm(cov, 2)
    for lam, v in zip(model.explained_variance, model.components):
        assert np.linalg.norm(cov @ v - lam * v) <= 1e-8 * norm
    assert np.all(np.diff(model.explained_variance) <= 0)
    lam0, v0 = _power_iteration(cov)
    assert model.explained_variance[0] == pytest.approx(lam0, rel=1e-8)
    assert abs(model.components[0] @ v0) == pytest.approx(1.0, abs=1e-6)


def test_sign_convention(rng):
    model = fit(rng.standard_normal((100, 6)), 4)
    for comp in model.components:
        assert comp[np.argmax(np.abs(comp))] > 0


def test_total_variance_and_scores(rng):
    x = rng.standard_normal((400, 10)) * np.arange(1, 11)
    model = fit(x, 3)
    _, cov = covariance(x)
    assert model.total_variance == pytest.approx(np.trace(cov), rel=1e-12)
    np.testing.assert_allclose(transform(model, model.mean[None]), 0.0, atol=1e-12)
    scores = transform(model, x)
    np.testing.assert_allclose(scores.var(axis=0, ddof=1), model.explained_variance, rtol=1e-9)


def test_reconstruction_error_monotone(rng):
    x = rng.standard_normal((200, 8)) @ rng.standard_normal((8, 8))
    errs = []
    for k in range(1, 9):
        m = fit(x, k)
        errs.append(np.sum((x - reconstruct(m, transform(m, x))) ** 2))
    assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))
    assert errs[-1] == pytest.approx(0.0, abs=1e-9 * np.sum(x ** 2))


def test_low_rank_plus_noise_cumulative(rng):
    basis = np.linalg.qr(rng.standard_normal((42, 3)))[0]
    x = rng.standard_normal((2000, 3)) * [10, 6, 4] @ basis.T + 0.05 * rng.standard_normal((2000, 42))
    assert np.sum(fit(x, 3).explained_ratio) >= 0.95


def test_export_scatter(tmp_path, rng):
    model = fit(rng.standard_normal((20, 5)), 3)
    scores = transform(model, rng.standard_normal((2, 5)))
    export_scatter(scores, ["healthy", "lrti"], tmp_path / "a.csv")
    export_scatter(scores, ["healthy", "lrti"], tmp_path / "b.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "pc1,pc2,pc3,label"
    assert len(lines) == 3
    assert all(len(line.split(",")) == 4 for line in lines)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    # repr floats round-trip exactly
    assert float(lines[1].split(",")[0]) == scores[0, 0]


def test_export_variance(tmp_path, rng):
    model = fit(rng.standard_normal((30, 5)), 3)
    export_variance(model, tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert len(lines) == 4
    assert float(lines[-1].split(",")[-1]) == pytest.approx(model.explained_ratio.sum())


def test_array_round_trip(rng):
    model = fit(rng.standard_normal((30, 5)), 2)
    back = PcaModel.from_arrays(model.to_arrays())
    np.testing.assert_array_equal(back.components, model.components)
    assert back.total_variance == model.total_variance


def test_shape_errors(rng):
    with pytest.raises(ShapeError):
        fit(np.ones((1, 4)))
    with pytest.raises(ConfigError):
        fit(rng.standard_normal((10, 2)), 3)
    model = fit(rng.standard_normal((10, 4)), 3)
    with pytest.raises(ShapeError):
        transform(model, np.ones((2, 5)))
    with pytest.raises(ShapeError):
        export_scatter(np.ones((2, 2)), ["a", "b"], "unused.csv")


def test_constant_data_zero_ratio():
    model = fit(np.ones((10, 4)), 2)
    np.testing.assert_array_equal(model.explained_ratio, 0.0)
