import math

import numpy as np
import pytest

from em2gm.model import (
    Dataset,
    ModelSpec,
    chi2_to_standard,
    grad_log_likelihood,
    log_likelihood,
    logcosh,
    loss,
    sample_dataset,
)
from em2gm.rng import derive_seed
from em2gm.sample_em import em_map


def test_spec_infers_dimension_and_norm():
    spec = ModelSpec(np.array([3.0, 4.0]))
    assert spec.d == 2
    assert spec.s == 5.0
    np.testing.assert_allclose(spec.direction, [0.6, 0.8])


def test_spec_along_axis():
    spec = ModelSpec.along_axis(1.5, 3)
    np.testing.assert_array_equal(spec.theta_star, [1.5, 0.0, 0.0])
    assert spec.s == 1.5


def test_spec_zero_center_has_no_direction():
    assert ModelSpec.along_axis(0.0, 2).direction is None


def test_spec_rejects_bad_input():
    with pytest.raises(ValueError):
        ModelSpec(np.array([np.inf, 0.0]))
    with pytest.raises(ValueError):
        ModelSpec(np.array([1.0, 2.0]), d=3)
    with pytest.raises(ValueError):
        ModelSpec.along_axis(-0.1, 2)
    with pytest.raises(ValueError):
        ModelSpec.along_axis(1.0, 0)


def test_spec_theta_star_is_read_only():
    spec = ModelSpec.along_axis(1.0, 2)
    with pytest.raises(ValueError):
        spec.theta_star[0] = 2.0


def test_sample_dataset_is_deterministic():
    spec = ModelSpec.along_axis(1.0, 3)
    a = sample_dataset(spec, 500, 42)
    b = sample_dataset(spec, 500, 42)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.any(a.samples != sample_dataset(spec, 500, 43).samples)


def test_sample_dataset_shapes_and_immutability():
    spec = ModelSpec.along_axis(0.5, 2)
    data = sample_dataset(spec, 100, 0)
    assert data.samples.shape == (100, 2)
    assert data.n == 100 and data.d == 2
    assert data.labels is None
    with pytest.raises(ValueError):
        data.samples[0, 0] = 0.0


def test_sample_dataset_labels_are_signs():
    spec = ModelSpec.along_axis(2.0, 1)
    data = sample_dataset(spec, 1000, 5, keep_labels=True)
    assert set(np.unique(data.labels)) == {-1.0, 1.0}
    # removing the signed center must leave standard normal residuals
    z = data.samples[:, 0] - data.labels * 2.0
    assert abs(float(z.mean())) < 0.15
    assert abs(float(z.std()) - 1.0) < 0.1


def test_dataset_validates_dimension():
    spec = ModelSpec.along_axis(1.0, 2)
    with pytest.raises(ValueError):
        Dataset(samples=np.zeros((5, 3)), seed=0, spec=spec)


def test_loss_symmetries():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert loss(a, b) == pytest.approx(loss(b, a), abs=1e-12)
        assert loss(a, b) == pytest.approx(loss(-a, b), abs=1e-12)
        assert loss(a, a) == 0.0


def test_loss_triangle_inequality_on_sign_quotient():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b, c = rng.normal(size=(3, 5))
        assert loss(a, c) <= loss(a, b) + loss(b, c) + 1e-12


def test_loss_of_zero_estimator_is_exactly_s():
    spec = ModelSpec(np.array([0.3, -1.2, 0.4]))
    assert loss(np.zeros(3), spec.theta_star) == spec.s


def test_loss_rejects_length_mismatch():
    with pytest.raises(ValueError):
        loss(np.zeros(2), np.zeros(3))


def test_logcosh_matches_naive_formula_in_safe_range():
    x = np.linspace(-20, 20, 401)
    np.testing.assert_allclose(logcosh(x), np.log(np.cosh(x)), atol=1e-12)


def test_logcosh_saturates_without_overflow():
    x = np.array([1e3, 1e6, -1e6])
    got = logcosh(x)
    assert np.all(np.isfinite(got))
    np.testing.assert_allclose(got, np.abs(x) - math.log(2.0), rtol=0, atol=1e-12)


def test_log_likelihood_matches_naive_density_sum():
    spec = ModelSpec.along_axis(1.0, 2)
    data = sample_dataset(spec, 50, 11)
    theta = np.array([0.7, -0.3])
    dens = 0.5 * (
        np.exp(-0.5 * np.sum((data.samples - theta) ** 2, axis=1))
        + np.exp(-0.5 * np.sum((data.samples + theta) ** 2, axis=1))
    ) / (2 * math.pi)
    assert log_likelihood(data, theta) == pytest.approx(float(np.mean(np.log(dens))), abs=1e-12)


def test_log_likelihood_finite_for_huge_arguments():
    spec = ModelSpec.along_axis(1.0, 2)
    data = sample_dataset(spec, 100, 1)
    theta = np.array([1e5, 1e5])  # |<theta, y>| well above the cosh overflow point
    assert math.isfinite(log_likelihood(data, theta))


def test_gradient_identity_is_bitwise():
    spec = ModelSpec.along_axis(0.8, 3)
    data = sample_dataset(spec, 400, 9)
    rng = np.random.default_rng(9)
    for _ in range(10):
        theta = rng.normal(size=3)
        gap = em_map(data, theta) - theta - grad_log_likelihood(data, theta)
        assert np.all(gap == 0.0)


def test_gradient_matches_finite_differences():
    spec = ModelSpec.along_axis(1.2, 3)
    data = sample_dataset(spec, 800, derive_seed(66, 0))
    theta = np.array([0.4, -0.9, 0.2])
    g = grad_log_likelihood(data, theta)
    h = 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (log_likelihood(data, theta + e) - log_likelihood(data, theta - e)) / (2 * h)
        assert g[j] == pytest.approx(fd, abs=1e-8)


def test_chi2_closed_form():
    theta = np.array([0.6, 0.8])  # |theta|^2 = 1
    assert chi2_to_standard(theta) == pytest.approx(math.cosh(1.0) - 1.0, rel=1e-14)
    assert chi2_to_standard(np.zeros(4)) == 0.0


def test_chi2_small_theta_no_cancellation():
    # cosh(r) - 1 evaluated naively loses all digits near r = 1e-4; the
    # series value r^2/2 + r^4/24 is exact to working precision there.
    theta = np.array([1e-2])
    r = 1e-4
    assert chi2_to_standard(theta) == pytest.approx(r * r / 2 + r**4 / 24, rel=1e-12)


def test_chi2_depends_on_norm_only():
    a = chi2_to_standard(np.array([1.0, 2.0, 2.0]))
    b = chi2_to_standard(np.array([3.0, 0.0, 0.0]))
    assert a == pytest.approx(b, rel=1e-14)


def test_chi2_overflows_to_infinity():
    assert chi2_to_standard(np.array([30.0])) == math.inf


def test_chi2_monte_carlo_oracle():
    # importance estimate under N(0, I): with r the density ratio of the
    # mixture to the standard normal, chi2 = E[r^2] - 1.
    theta = np.array([0.8, 0.6])
    rng = np.random.default_rng(123)
    y = rng.standard_normal((2_000_000, 2))
    r = np.exp(-0.5 * float(theta @ theta)) * np.cosh(y @ theta)
    est = float(np.mean(r * r)) - 1.0
    assert chi2_to_standard(theta) == pytest.approx(est, abs=0.02)
