"""Monte Carlo harness: rate sweeps, risk comparisons, and dynamics probes.

The statistical claims under test are order-of-growth statements, so the
harness turns them into slope fits: run EM over a grid of sample sizes,
average the final loss over replicates, and regress log mean loss on log n.
Every replicate draws its seeds from a SeedSequence fan-out keyed by
(master_seed, grid index, replicate, stream), so results are bit-identical
across reruns and across any parallel schedule; rows are merged in task-key
order, never completion order.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .initializers import InitSpec, make_init, spectral_init
from .model import Dataset, ModelSpec, log_likelihood, loss, sample_dataset
from .population import PopulationState, QuadratureRule, f_pop, population_trajectory
from .rng import derive_seed
from .sample_em import StopRule, iterate_em, run_em

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "Row",
    "SlopeSummary",
    "fit_loglog_slope",
    "rate_sweep",
    "RiskComparison",
    "risk_compare",
    "ContractionProbe",
    "mle_contraction_probe",
    "Figure2Result",
    "figure2_reproduction",
    "SublinearProbe",
    "sublinear_rate_probe",
]

_STREAM_DATA = 0
_STREAM_INIT = 1

_CSV_HEADER = "n,d,s,replicate,final_loss,iters,final_loglik"

_ESTIMATORS = ("em", "spectral", "zero")


class Row(NamedTuple):
    n: int
    d: int
    s: float
    replicate: int
    final_loss: float
    iters: int
    final_loglik: float


@dataclass(frozen=True)
class SlopeSummary:
    """Per-(d, s) aggregate: losses by n and the fitted log-log slope."""

    d: int
    s: float
    n_values: tuple[int, ...]
    mean_loss: tuple[float, ...]
    median_loss: tuple[float, ...]
    slope: float | None
    slope_stderr: float | None

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "s": self.s,
            "n": list(self.n_values),
            "mean_loss": list(self.mean_loss),
            "median_loss": list(self.median_loss),
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: a grid of (n, d, s) cells, repeated, from one master seed.

    When ``stop`` is None each cell gets the budget ceil(c_iter sqrt(n))
    with the configured rel_tol; an explicit StopRule applies verbatim to
    every cell. ``dtype`` selects the inner-loop precision of iterate_em;
    float32 is the documented fast path for the large worst-case sweeps,
    where the iteration noise sits far below the statistical error.
    """

    grid: tuple[tuple[int, int, float], ...]
    replicates: int
    init: InitSpec
    master_seed: int
    output_path: str | Path | None = None
    stop: StopRule | None = None
    rel_tol: float = 1e-8
    c_iter: float = 10.0
    dtype: str = "float64"
    threads: int = 1

    def __post_init__(self):
        grid = tuple((int(n), int(d), float(s)) for n, d, s in self.grid)
        if not grid:
            raise ValueError("grid must be non-empty")
        for n, d, s in grid:
            if n < 2:
                raise ValueError("all n must be >= 2")
            if d < 1:
                raise ValueError("all d must be >= 1")
            if not (s >= 0.0):
                raise ValueError("all s must be nonnegative")
        object.__setattr__(self, "grid", grid)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @classmethod
    def from_product(cls, n_grid, d_grid, s_grid, **kwargs) -> "ExperimentConfig":
        """Grid ordered (d, s)-major so each summary group sweeps n."""
        grid = [(n, d, s) for d in d_grid for s in s_grid for n in n_grid]
        return cls(grid=tuple(grid), **kwargs)

    def stop_for(self, n: int) -> StopRule:
        if self.stop is not None:
            return self.stop
        return StopRule.for_n(n, c_iter=self.c_iter, rel_tol=self.rel_tol)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple[Row, ...]
    summaries: tuple[SlopeSummary, ...]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_CSV_HEADER + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.n},{r.d},{r.s:.17g},{r.replicate},"
                    f"{r.final_loss:.17g},{r.iters},{r.final_loglik:.17g}\n"
                )

    def summary_to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([s.to_dict() for s in self.summaries], fh, indent=2)
            fh.write("\n")


def fit_loglog_slope(x, y) -> tuple[float | None, float | None]:
    """OLS slope of log y on log x, with its standard error.

    Points with nonpositive y are dropped (a zero mean loss carries no rate
    information). Returns (None, None) with fewer than two usable points and
    (slope, None) with exactly two.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = y > 0.0
    x, y = x[keep], y[keep]
    m = x.size
    if m < 2:
        return None, None
    lx, ly = np.log(x), np.log(y)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    if m == 2:
        return slope, None
    resid = ly - (ly.mean() + slope * (lx - lx.mean()))
    sigma2 = float(np.sum(resid ** 2)) / (m - 2)
    return slope, math.sqrt(sigma2 / sxx)


def _summarize(rows: list[Row]) -> tuple[SlopeSummary, ...]:
    groups: dict[tuple[int, float], dict[int, list[float]]] = {}
    for r in rows:
        groups.setdefault((r.d, r.s), {}).setdefault(r.n, []).append(r.final_loss)
    out = []
    for (d, s), by_n in groups.items():
        ns = sorted(by_n)
        means = [float(np.mean(by_n[n])) for n in ns]
        medians = [float(np.median(by_n[n])) for n in ns]
        slope, stderr = fit_loglog_slope(ns, means)
        out.append(SlopeSummary(d=d, s=s, n_values=tuple(ns), mean_loss=tuple(means),
                                median_loss=tuple(medians), slope=slope, slope_stderr=stderr))
    return tuple(out)


def _em_cell(config: ExperimentConfig, gi: int, k: int) -> Row:
    n, d, s = config.grid[gi]
    spec = ModelSpec.along_axis(s, d)
    data = sample_dataset(spec, n, derive_seed(config.master_seed, gi, k, _STREAM_DATA))
    theta0 = make_init(config.init, data,
                       seed=derive_seed(config.master_seed, gi, k, _STREAM_INIT))
    theta, iters = iterate_em(data.samples, theta0, config.stop_for(n),
                              dtype=config.np_dtype)
    return Row(n=n, d=d, s=spec.s, replicate=k,
               final_loss=loss(theta, spec.theta_star), iters=iters,
               final_loglik=log_likelihood(data, theta))


def _run_tasks(config: ExperimentConfig, cell) -> list:
    tasks = [(gi, k) for gi in range(len(config.grid)) for k in range(config.replicates)]
    if config.threads == 1:
        return [cell(gi, k) for gi, k in tasks]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        # map preserves task order, so the merge is schedule-independent
        return list(pool.map(lambda t: cell(*t), tasks))


def _default_summary_path(path: Path) -> Path:
    return path.with_name(path.stem + ".summary.json")


def rate_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Final EM loss over the grid; slope of log mean loss vs log n per (d, s).

    Writes the row CSV to config.output_path and the slope summary next to
    it as <stem>.summary.json when an output path is set.
    """
    rows = _run_tasks(config, lambda gi, k: _em_cell(config, gi, k))
    result = ExperimentResult(rows=tuple(rows), summaries=_summarize(rows))
    if config.output_path is not None:
        path = Path(config.output_path)
        result.to_csv(path)
        result.summary_to_json(_default_summary_path(path))
    return result


@dataclass(frozen=True)
class RiskComparison:
    """Per-estimator results on a shared grid and shared datasets."""

    results: dict[str, ExperimentResult]

    def mean_loss(self, estimator: str, n: int, d: int, s: float) -> float:
        vals = [r.final_loss for r in self.results[estimator].rows
                if (r.n, r.d) == (n, d) and math.isclose(r.s, s)]
        if not vals:
            raise KeyError(f"no rows for {estimator} at (n={n}, d={d}, s={s})")
        return float(np.mean(vals))


def risk_compare(config: ExperimentConfig, estimators=("em", "spectral", "zero")) -> RiskComparison:
    """Monte Carlo risk of each estimator on identical datasets.

    "em" runs the full iteration from config.init and reports the stopped
    iterate; "spectral" scores the spectral estimator itself; "zero" is the
    trivial baseline whose loss is exactly s. Output files take the
    estimator name as a suffix on config.output_path's stem, with a single
    combined <stem>.summary.json.
    """
    estimators = tuple(estimators)
    if not estimators:
        raise ValueError("estimators must be non-empty")
    if len(set(estimators)) != len(estimators):
        raise ValueError("duplicate estimator names")
    for name in estimators:
        if name not in _ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}; expected subset of {_ESTIMATORS}")

    def cell(gi: int, k: int) -> dict[str, Row]:
        n, d, s = config.grid[gi]
        spec = ModelSpec.along_axis(s, d)
        data = sample_dataset(spec, n, derive_seed(config.master_seed, gi, k, _STREAM_DATA))
        out: dict[str, Row] = {}
        for name in estimators:
            if name == "em":
                theta0 = make_init(config.init, data,
                                   seed=derive_seed(config.master_seed, gi, k, _STREAM_INIT))
                theta, iters = iterate_em(data.samples, theta0, config.stop_for(n),
                                          dtype=config.np_dtype)
            elif name == "spectral":
                theta, iters = spectral_init(data), 0
            else:
                theta, iters = np.zeros(d), 0
            out[name] = Row(n=n, d=d, s=spec.s, replicate=k,
                            final_loss=loss(theta, spec.theta_star), iters=iters,
                            final_loglik=log_likelihood(data, theta))
        return out

    cells = _run_tasks(config, cell)
    results = {}
    for name in estimators:
        rows = [c[name] for c in cells]
        results[name] = ExperimentResult(rows=tuple(rows), summaries=_summarize(rows))
    comparison = RiskComparison(results=results)
    if config.output_path is not None:
        path = Path(config.output_path)
        for name in estimators:
            results[name].to_csv(path.with_name(f"{path.stem}_{name}{path.suffix}"))
        with open(_default_summary_path(path), "w", encoding="utf-8") as fh:
            json.dump({name: [s.to_dict() for s in results[name].summaries]
                       for name in estimators}, fh, indent=2)
            fh.write("\n")
    return comparison


@dataclass(frozen=True)
class ContractionProbe:
    """Contraction ratios toward the long-run EM limit.

    The proxy for the likelihood maximizer is the last iterate of a run 50
    steps longer than the observation window; ratios compare successive
    distances to it. c_hat solves geo_mean = exp(-c_hat s^2), the fitted
    per-step contraction exponent.
    """

    ratios: np.ndarray
    max_ratio: float | None
    geo_mean: float | None
    c_hat: float | None

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,ratio\n")
            for t, r in enumerate(self.ratios):
                fh.write(f"{t},{r:.17g}\n")


def mle_contraction_probe(data: Dataset, spec: ModelSpec | None, init: InitSpec,
                          burn_in: int, extra: int) -> ContractionProbe:
    """Ratios |theta_{t+1} - theta_inf| / |theta_t - theta_inf| after burn-in.

    Runs EM for burn_in + extra + 50 steps with the relative stop disabled,
    takes the final iterate as theta_inf, and reports the ratio sequence for
    t in the ``extra`` window. Once an iterate is within 1e-14 of theta_inf
    the ratio is no longer meaningful and the window is truncated; with a
    fast-contracting run the window can come back empty.
    """
    if spec is None:
        spec = data.spec
    if burn_in < 1 or extra < 1:
        raise ValueError("burn_in and extra must be >= 1")
    scale = (data.d * math.log(data.n) ** 3 / data.n) ** 0.25
    if spec.s < scale:
        warnings.warn(
            f"s={spec.s:.4g} is below the contraction scale {scale:.4g}; "
            "the MLE proxy may not contract", stacklevel=2)
    total = burn_in + extra + 50
    traj = run_em(data, make_init(init, data), StopRule(max_iters=total, rel_tol=0.0),
                  spec, keep_iterates=True)
    iters = traj.iterates
    theta_inf = iters[-1]
    dist = np.linalg.norm(iters - theta_inf[None, :], axis=1)
    ratios = []
    for t in range(burn_in, min(burn_in + extra, len(iters) - 1)):
        if dist[t] < 1e-14:
            break
        ratios.append(dist[t + 1] / dist[t])
    ratios = np.array(ratios)
    if ratios.size == 0:
        return ContractionProbe(ratios=ratios, max_ratio=None, geo_mean=None, c_hat=None)
    geo = float(np.exp(np.mean(np.log(np.maximum(ratios, 1e-300)))))
    c_hat = -math.log(geo) / (spec.s ** 2) if spec.s > 0.0 else None
    return ContractionProbe(ratios=ratios, max_ratio=float(ratios.max()),
                            geo_mean=geo, c_hat=c_hat)


@dataclass(frozen=True)
class Figure2Result:
    """Two population runs at s = 0.35: one overshooting start, one small one.

    ``non_monotone_pass``: the (0.1, 0.7) run dips below its initial signal
    before recovering and lands within 1e-2 of s. ``monotone_pass``: the
    (0.1, 0.1) run increases its signal every step (1e-9 slack) and lands
    within 1e-2 of s. ``beta_decreasing_after_first`` records the observed
    (not asserted) monotone decay of the orthogonal part from t = 1 on.
    """

    non_monotone_run: list[PopulationState]
    monotone_run: list[PopulationState]
    non_monotone_pass: bool
    monotone_pass: bool
    beta_decreasing_after_first: bool


def figure2_reproduction(rule: QuadratureRule) -> Figure2Result:
    """Reproduce the two reference population trajectories (s=0.35, T=60)."""
    s, T = 0.35, 60
    run_a = population_trajectory(PopulationState(0.1, 0.7), s, T, rule)
    run_b = population_trajectory(PopulationState(0.1, 0.1), s, T, rule)
    alpha_a = np.array([st.alpha for st in run_a])
    alpha_b = np.array([st.alpha for st in run_b])
    flag_a = bool(alpha_a.min() < alpha_a[0] and abs(alpha_a[-1] - s) < 1e-2)
    flag_b = bool(np.all(np.diff(alpha_b) >= -1e-9) and abs(alpha_b[-1] - s) < 1e-2)
    beta_obs = True
    for run in (run_a, run_b):
        beta = np.array([st.beta for st in run])
        beta_obs = beta_obs and bool(np.all(np.diff(beta[1:]) <= 1e-9))
    return Figure2Result(non_monotone_run=run_a, monotone_run=run_b,
                         non_monotone_pass=flag_a, monotone_pass=flag_b,
                         beta_decreasing_after_first=beta_obs)


@dataclass(frozen=True)
class SublinearProbe:
    """1-D population iterates at s = 0 and the fitted decay slope."""

    slope: float
    thetas: np.ndarray


def sublinear_rate_probe(rule: QuadratureRule, T: int = 10_000,
                         theta0: float = 1.0, fit_from: int = 100) -> SublinearProbe:
    """Slope of log theta_t vs log t for the signal-free population map.

    With no signal the map contracts only through its cubic term, so the
    iterates decay like t^{-1/2}; the fit over t in [fit_from, T] recovers
    that exponent.
    """
    if T <= fit_from:
        raise ValueError("T must exceed fit_from")
    thetas = np.empty(T + 1)
    thetas[0] = theta0
    for t in range(T):
        thetas[t + 1] = f_pop(thetas[t], 0.0, rule)
    ts = np.arange(fit_from, T + 1)
    slope, _ = fit_loglog_slope(ts, thetas[fit_from:])
    return SublinearProbe(slope=slope, thetas=thetas)
