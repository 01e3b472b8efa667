"""The symmetric two-component Gaussian mixture and its likelihood.

The model is a balanced mixture of N(theta, I_d) and N(-theta, I_d) with a
single unknown center ``theta``. The parameter is identifiable only up to a
global sign flip, so estimation error is always measured by

    loss(a, b) = min(|a - b|, |a + b|)

in the Euclidean norm. This module owns the ground truth (ModelSpec), the
sampler (Dataset), the loss, the average log-likelihood and its gradient, and
the chi-square divergence to the standard normal. The gradient and the EM map
share one kernel so the identity em_map(theta) = theta + grad holds bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .rng import make_generator, open_uniforms

__all__ = [
    "ModelSpec",
    "Dataset",
    "sample_dataset",
    "loss",
    "logcosh",
    "log_likelihood",
    "grad_log_likelihood",
    "chi2_to_standard",
]

_LOG_2 = math.log(2.0)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Ground truth for one experiment: the center ``theta_star`` in R^d.

    ``s`` caches the Euclidean norm of ``theta_star`` and ``direction`` the
    unit vector along it (None when the center is zero and no direction is
    defined). Instances are immutable and safe to share across threads.
    """

    theta_star: np.ndarray
    d: int = 0
    s: float = field(init=False)

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta_star, dtype=np.float64)).copy()
        if theta.ndim != 1 or theta.size == 0:
            raise ValueError("theta_star must be a nonempty 1-D vector")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta_star must be finite")
        if self.d and self.d != theta.size:
            raise ValueError(f"d={self.d} does not match len(theta_star)={theta.size}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "d", theta.size)
        object.__setattr__(self, "s", float(np.linalg.norm(theta)))

    @classmethod
    def along_axis(cls, s: float, d: int) -> "ModelSpec":
        """Center of norm ``s`` on the first coordinate axis."""
        if d < 1:
            raise ValueError("d must be >= 1")
        if not (np.isfinite(s) and s >= 0.0):
            raise ValueError("s must be finite and nonnegative")
        theta = np.zeros(d)
        theta[0] = s
        return cls(theta)

    @property
    def direction(self) -> np.ndarray | None:
        """Unit vector theta_star / |theta_star|, or None at the origin."""
        if self.s == 0.0:
            return None
        return self.theta_star / self.s


@dataclass(frozen=True)
class Dataset:
    """n samples of Y = X theta_star + Z, X a fair sign, Z standard normal.

    Immutable; regenerating with the same (spec, n, seed) is bit-identical.
    ``labels`` optionally retains the latent signs X for diagnostics.
    """

    samples: np.ndarray
    seed: int
    spec: ModelSpec
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError("samples must be a nonempty n x d matrix")
        if self.samples.shape[1] != self.spec.d:
            raise ValueError("sample dimension does not match spec.d")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def sample_dataset(spec: ModelSpec, n: int, seed: int, keep_labels: bool = False) -> Dataset:
    """Draw n iid samples from the mixture, deterministically in ``seed``.

    Row i consumes d+1 uniforms: one for the sign, d for the normal vector.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_generator(seed)
    u = open_uniforms(rng, (n, spec.d + 1))
    signs = np.where(u[:, 0] < 0.5, 1.0, -1.0)
    y = ndtri(u[:, 1:])
    if spec.s != 0.0:
        y += signs[:, None] * spec.theta_star[None, :]
    y.setflags(write=False)
    return Dataset(samples=y, seed=int(seed), spec=spec,
                   labels=signs if keep_labels else None)


def loss(theta_hat, theta) -> float:
    """Euclidean distance modulo the global sign flip."""
    a = np.asarray(theta_hat, dtype=np.float64)
    b = np.asarray(theta, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def logcosh(x):
    """log(cosh(x)), overflow-safe for any magnitude."""
    # cosh(x) = e^|x| (1 + e^{-2|x|}) / 2; the inner products can exceed 700.
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - _LOG_2


def _mean_y_tanh(samples: np.ndarray, theta: np.ndarray) -> np.ndarray:
    # Shared kernel: (1/n) sum_i y_i tanh(<theta, y_i>). Both the EM map and
    # the likelihood gradient are thin wrappers, so their identity is bitwise.
    t = np.tanh(samples @ theta)
    return (t @ samples) / samples.shape[0]


def log_likelihood(data: Dataset, theta) -> float:
    """Average log-likelihood (1/n) sum_i log p_theta(y_i).

    The mixture density factors as phi_d(y) exp(-|theta|^2/2) cosh(<theta,y>),
    with phi_d the standard normal density, so the per-sample term is

        -|y|^2/2 - (d/2) log(2 pi) - |theta|^2/2 + logcosh(<theta, y>).
    """
    theta = np.asarray(theta, dtype=np.float64)
    y = data.samples
    base = -0.5 * float(np.mean(np.einsum("ij,ij->i", y, y))) - 0.5 * data.d * _LOG_2PI
    return base - 0.5 * float(theta @ theta) + float(np.mean(logcosh(y @ theta)))


def grad_log_likelihood(data: Dataset, theta) -> np.ndarray:
    """Gradient of the average log-likelihood: -theta + E_n[Y tanh<theta, Y>]."""
    theta = np.asarray(theta, dtype=np.float64)
    return _mean_y_tanh(data.samples, theta) - theta


def chi2_to_standard(theta) -> float:
    """Chi-square divergence of the mixture from N(0, I_d): cosh(|theta|^2) - 1.

    Evaluated as (expm1(r) + expm1(-r))/2 with r = |theta|^2, which is exact
    for small centers where cosh(r) - 1 would cancel catastrophically.
    """
    theta = np.asarray(theta, dtype=np.float64)
    r = float(theta @ theta)
    return 0.5 * (math.expm1(r) + math.expm1(-r)) if r < 709.0 else math.inf
