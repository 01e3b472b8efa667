import math

import numpy as np
import pytest

from em2gm.model import Dataset, ModelSpec, grad_log_likelihood, sample_dataset
from em2gm.rng import derive_seed
from em2gm.sample_em import (
    StopReason,
    StopRule,
    Trajectory,
    em_jacobian,
    em_map,
    em_map_batch,
    iterate_em,
    run_em,
)


def _data(s=1.0, d=2, n=500, seed=0):
    return sample_dataset(ModelSpec.along_axis(s, d), n, seed)


def test_em_map_fixes_origin():
    data = _data()
    np.testing.assert_array_equal(em_map(data, np.zeros(2)), np.zeros(2))


def test_em_map_antisymmetric():
    data = _data(seed=3)
    theta = np.array([0.4, -1.1])
    np.testing.assert_array_equal(em_map(data, -theta), -em_map(data, theta))


def test_em_map_saturated_single_sample():
    spec = ModelSpec.along_axis(1.0, 1)
    data = Dataset(samples=np.array([[2.0]]), seed=0, spec=spec)
    out = em_map(data, np.array([10.0]))
    assert out[0] == pytest.approx(2.0 * math.tanh(20.0), abs=1e-12)
    assert out[0] == pytest.approx(2.0, abs=1e-8)


def test_em_map_range_bound():
    data = _data(s=2.0, d=3, n=200, seed=7)
    cap = math.sqrt(float(np.mean(np.sum(data.samples**2, axis=1))))
    rng = np.random.default_rng(7)
    for _ in range(25):
        theta = rng.normal(size=3) * rng.uniform(0, 10)
        assert float(np.linalg.norm(em_map(data, theta))) <= cap + 1e-12


def test_em_map_lipschitz_in_sample_covariance_norm():
    data = _data(s=1.0, d=3, n=300, seed=11)
    sig = data.samples.T @ data.samples / data.n
    lip = float(np.linalg.eigvalsh(sig)[-1])
    rng = np.random.default_rng(11)
    for _ in range(50):
        t1, t2 = rng.normal(size=(2, 3)) * 2.0
        gap = float(np.linalg.norm(em_map(data, t1) - em_map(data, t2)))
        assert gap <= lip * float(np.linalg.norm(t1 - t2)) + 1e-9


def test_em_map_batch_matches_single_evaluations():
    data = _data(n=3000, seed=5)
    thetas = np.random.default_rng(5).normal(size=(17, 2))
    batched = em_map_batch(data.samples, thetas, row_block=1000)  # forces chunking
    single = np.array([em_map(data, t) for t in thetas])
    # blocked accumulation reorders the sum, so roundoff-level agreement only
    np.testing.assert_allclose(batched, single, rtol=1e-12, atol=1e-15)


def test_stop_rule_budget_formula():
    assert StopRule.for_n(10_000).max_iters == 1000
    assert StopRule.for_n(10_000, c_iter=0.25).max_iters == 25
    assert StopRule.for_n(50, c_iter=10.0).max_iters == math.ceil(10.0 * math.sqrt(50))


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule(max_iters=0)
    with pytest.raises(ValueError):
        StopRule(max_iters=5, rel_tol=-1.0)


def test_run_em_zero_start_is_fixed():
    traj = run_em(_data(), np.zeros(2), StopRule(max_iters=100))
    assert traj.stop_reason is StopReason.REL_CHANGE
    assert len(traj) == 2  # theta_0 and the single confirming step
    np.testing.assert_array_equal(traj.alpha, [0.0, 0.0])


def test_run_em_records_all_fields_same_length():
    traj = run_em(_data(seed=21), np.array([1.0, 0.0]), StopRule(max_iters=30, rel_tol=0.0),
                  keep_iterates=True)
    assert len(traj.alpha) == len(traj.beta) == len(traj.loss) == len(traj.loglik) == 31
    assert traj.iterates.shape == (31, 2)
    assert traj.stop_reason is StopReason.MAX_ITERS


def test_run_em_loglik_monotone_and_norm_decomposition():
    rng = np.random.default_rng(14)
    for k in range(25):
        d = int(rng.integers(1, 5))
        s = float(rng.uniform(0, 2.5))
        data = sample_dataset(ModelSpec.along_axis(s, d), int(rng.integers(80, 800)),
                              derive_seed(14, k))
        theta0 = rng.normal(size=d) * rng.uniform(0.1, 3.0)
        traj = run_em(data, theta0, StopRule(max_iters=30, rel_tol=0.0), keep_iterates=True)
        assert np.all(np.diff(traj.loglik) >= -1e-12)
        norms = np.linalg.norm(traj.iterates, axis=1)
        np.testing.assert_allclose(traj.alpha**2 + traj.beta**2, norms**2, atol=1e-10)


def test_run_em_zero_center_decomposition():
    data = _data(s=0.0, d=3, n=400, seed=2)
    traj = run_em(data, np.array([0.5, 0.5, 0.5]), StopRule(max_iters=20), keep_iterates=True)
    np.testing.assert_array_equal(traj.alpha, np.zeros(len(traj)))
    np.testing.assert_allclose(traj.beta, np.linalg.norm(traj.iterates, axis=1), atol=1e-12)
    np.testing.assert_allclose(traj.loss, traj.beta, atol=1e-12)


def test_run_em_null_signal_keeps_final_iterate_small():
    # with no true center the iterates must shrink toward 0 at the n^{-1/4} scale
    spec = ModelSpec.along_axis(0.0, 1)
    worst = 0.0
    for k in range(50):
        data = sample_dataset(spec, 10_000, derive_seed(44, k))
        traj = run_em(data, np.array([1.0]), StopRule(max_iters=1000))
        worst = max(worst, float(abs(traj.beta[-1])))
    assert worst <= 0.5
    assert worst <= 5.0 * 10_000 ** -0.25


def test_run_em_rejects_wrong_start_dimension():
    with pytest.raises(ValueError):
        run_em(_data(), np.zeros(3), StopRule(max_iters=5))


def test_iterate_em_matches_run_em_in_float64():
    data = _data(s=1.0, d=2, n=1000, seed=33)
    theta0 = np.array([0.8, -0.2])
    stop = StopRule(max_iters=200, rel_tol=1e-8)
    traj = run_em(data, theta0, stop, keep_iterates=True)
    theta, iters = iterate_em(data.samples, theta0, stop)
    np.testing.assert_array_equal(theta, traj.iterates[-1])
    assert iters == len(traj) - 1


def test_iterate_em_float32_stays_close():
    data = _data(s=1.0, d=2, n=2000, seed=8)
    theta0 = np.array([1.0, 0.0])
    t64, _ = iterate_em(data.samples, theta0, StopRule(max_iters=60, rel_tol=0.0))
    t32, _ = iterate_em(data.samples, theta0, StopRule(max_iters=60, rel_tol=0.0),
                        dtype=np.float32)
    assert t32.dtype == np.float64  # result promoted for downstream arithmetic
    assert float(np.linalg.norm(t64 - t32)) < 1e-3


def test_trajectory_csv_round_trip(tmp_path):
    traj = run_em(_data(seed=17), np.array([0.5, 0.5]), StopRule(max_iters=10, rel_tol=0.0),
                  keep_iterates=True)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,alpha,beta,loss,loglik,theta_0,theta_1"
    assert len(lines) == len(traj) + 1
    row3 = lines[4].split(",")
    assert int(row3[0]) == 3
    assert float(row3[1]) == traj.alpha[3]  # 17 significant digits round-trip
    assert float(row3[5]) == traj.iterates[3, 0]


def test_trajectory_csv_without_iterates(tmp_path):
    traj = run_em(_data(seed=17), np.array([0.5, 0.5]), StopRule(max_iters=5, rel_tol=0.0))
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,alpha,beta,loss,loglik"


def test_jacobian_at_origin_is_second_moment():
    data = _data(s=1.0, d=3, n=400, seed=19)
    np.testing.assert_allclose(em_jacobian(data, np.zeros(3)),
                               data.samples.T @ data.samples / data.n, atol=1e-14)


def test_jacobian_symmetric_psd_and_dominated():
    data = _data(s=1.0, d=3, n=400, seed=23)
    top0 = float(np.linalg.eigvalsh(em_jacobian(data, np.zeros(3)))[-1])
    rng = np.random.default_rng(23)
    for _ in range(10):
        theta = rng.normal(size=3)
        jac = em_jacobian(data, theta)
        np.testing.assert_allclose(jac, jac.T, atol=1e-14)
        evals = np.linalg.eigvalsh(jac)
        assert evals[0] >= -1e-10
        assert evals[-1] <= top0 + 1e-10


def test_jacobian_matches_finite_difference_of_em_map():
    data = _data(s=0.7, d=2, n=300, seed=29)
    theta = np.array([0.3, -0.6])
    jac = em_jacobian(data, theta)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (em_map(data, theta + e) - em_map(data, theta - e)) / (2 * h)
        np.testing.assert_allclose(jac[:, j], fd, atol=1e-6)


def test_gradient_and_em_map_share_kernel():
    data = _data(seed=31)
    theta = np.array([0.9, 0.1])
    assert np.all(em_map(data, theta) - theta - grad_log_likelihood(data, theta) == 0.0)
