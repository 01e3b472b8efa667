"""Finite-sample EM iteration and its bookkeeping.

One EM step for the symmetric mixture collapses to the closed-form map

    f_n(theta) = (1/n) sum_i y_i tanh(<theta, y_i>),

which equals theta + grad of the average log-likelihood (same kernel as
model.grad_log_likelihood, so the identity is bitwise). run_em records the
full diagnostic trajectory: the signal/orthogonal decomposition of each
iterate against the true direction, the loss, and the log-likelihood, which
EM never decreases. iterate_em is the stripped loop for large Monte Carlo
sweeps; it records nothing and can run in float32, where tanh and the two
matrix products dominate and the narrower dtype roughly doubles throughput.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import Dataset, ModelSpec, _mean_y_tanh, log_likelihood, loss

__all__ = [
    "StopReason",
    "StopRule",
    "Trajectory",
    "em_map",
    "em_map_batch",
    "run_em",
    "iterate_em",
    "em_jacobian",
]


class StopReason(str, enum.Enum):
    MAX_ITERS = "max_iters"
    REL_CHANGE = "rel_change"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class StopRule:
    """Stop at max_iters, or earlier once the step is relatively small.

    The relative test is |theta_{t+1} - theta_t| <= rel_tol * max(|theta_t|,
    1e-30); the floor keeps the rule meaningful at the zero fixed point.
    """

    max_iters: int
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.rel_tol >= 0.0):
            raise ValueError("rel_tol must be nonnegative")

    @classmethod
    def for_n(cls, n: int, c_iter: float = 10.0, rel_tol: float = 1e-8) -> "StopRule":
        """Iteration budget ceil(c_iter * sqrt(n)): the sample EM map needs
        order sqrt(n) steps in the worst case, c_iter adds the safety factor."""
        return cls(max_iters=math.ceil(c_iter * math.sqrt(n)), rel_tol=rel_tol)

    def step_small(self, delta_norm: float, theta_norm: float) -> bool:
        return delta_norm <= self.rel_tol * max(theta_norm, 1e-30)


@dataclass(frozen=True)
class Trajectory:
    """Per-step record of one EM run, all arrays of length T+1 including t=0.

    When the true center is zero there is no signal direction: alpha is
    recorded as 0, beta as |theta_t|, and the loss reduces to |theta_t|.
    """

    alpha: np.ndarray
    beta: np.ndarray
    loss: np.ndarray
    loglik: np.ndarray
    stop_reason: StopReason
    iterates: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.alpha)

    def to_csv(self, path) -> None:
        """Columns t, alpha, beta, loss, loglik, plus theta_* when stored."""
        d = self.iterates.shape[1] if self.iterates is not None else 0
        header = "t,alpha,beta,loss,loglik" + "".join(f",theta_{j}" for j in range(d))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for t in range(len(self)):
                row = [str(t)] + [
                    f"{v:.17g}" for v in (self.alpha[t], self.beta[t], self.loss[t], self.loglik[t])
                ]
                if d:
                    row += [f"{v:.17g}" for v in self.iterates[t]]
                fh.write(",".join(row) + "\n")


def em_map(data: Dataset, theta) -> np.ndarray:
    """One EM step: f_n(theta) = (1/n) sum_i y_i tanh(<theta, y_i>)."""
    theta = np.asarray(theta, dtype=np.float64)
    return _mean_y_tanh(data.samples, theta)


def em_map_batch(samples: np.ndarray, thetas: np.ndarray,
                 row_block: int = 2_000_000) -> np.ndarray:
    """f_n evaluated at many points at once; thetas is (k, d), result (k, d).

    Blocks over sample rows so the n x k tanh buffer stays bounded.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    n, d = samples.shape
    k = thetas.shape[0]
    block = max(1, min(n, row_block // max(k, 1)))
    acc = np.zeros((k, d))
    for lo in range(0, n, block):
        chunk = samples[lo:lo + block]
        acc += np.tanh(chunk @ thetas.T).T @ chunk
    return acc / n


def run_em(data: Dataset, theta0, stop: StopRule, spec: ModelSpec | None = None,
           keep_iterates: bool = False) -> Trajectory:
    """Iterate the EM map from theta0, recording the full diagnostic record.

    ``spec`` supplies the ground truth for the decomposition and the loss;
    it defaults to the spec the dataset was generated from. Non-finite
    iterates stop the run with stop_reason=diverged (unreachable for finite
    data; it would signal a bug, not a modeling failure).
    """
    if spec is None:
        spec = data.spec
    theta = np.asarray(theta0, dtype=np.float64).copy()
    if theta.shape != (data.d,):
        raise ValueError("theta0 must have length d")
    eta = spec.direction

    alphas, betas, losses, logliks = [], [], [], []
    iterates = [] if keep_iterates else None

    def record(th):
        if eta is None:
            a, b = 0.0, float(np.linalg.norm(th))
        else:
            a = float(th @ eta)
            b = float(np.linalg.norm(th - a * eta))
        alphas.append(a)
        betas.append(b)
        losses.append(loss(th, spec.theta_star))
        logliks.append(log_likelihood(data, th))
        if iterates is not None:
            iterates.append(th.copy())

    record(theta)
    reason = StopReason.MAX_ITERS
    for _ in range(stop.max_iters):
        nxt = em_map(data, theta)
        if not np.all(np.isfinite(nxt)):
            reason = StopReason.DIVERGED
            break
        record(nxt)
        if stop.step_small(float(np.linalg.norm(nxt - theta)), float(np.linalg.norm(theta))):
            theta = nxt
            reason = StopReason.REL_CHANGE
            break
        theta = nxt

    return Trajectory(
        alpha=np.array(alphas),
        beta=np.array(betas),
        loss=np.array(losses),
        loglik=np.array(logliks),
        stop_reason=reason,
        iterates=np.array(iterates) if iterates is not None else None,
    )


def iterate_em(samples: np.ndarray, theta0, stop: StopRule,
               dtype=np.float64) -> tuple[np.ndarray, int]:
    """Bare EM loop for sweeps: returns (final iterate as float64, steps run).

    The step count is the first t at which the relative-change rule fired,
    or max_iters if it never did. float32 halves memory traffic for the
    tanh/matmul inner loop; the returned iterate is cast back to float64.
    """
    S = np.ascontiguousarray(samples, dtype=dtype)
    theta = np.asarray(theta0, dtype=dtype).copy()
    n = S.shape[0]
    for t in range(1, stop.max_iters + 1):
        z = S @ theta
        np.tanh(z, out=z)
        nxt = (z @ S) / n
        if stop.step_small(float(np.linalg.norm(nxt - theta)), float(np.linalg.norm(theta))):
            return nxt.astype(np.float64), t
        theta = nxt
    return theta.astype(np.float64), stop.max_iters


def em_jacobian(data: Dataset, theta) -> np.ndarray:
    """Jacobian of the EM map, J_n(theta) = E_n[Y Y^T sech^2(<theta, Y>)].

    Symmetric PSD; at theta = 0 it is exactly the sample second-moment
    matrix. sech^2 is evaluated as (2 e^{-|x|} / (1 + e^{-2|x|}))^2, which
    underflows gracefully instead of overflowing.
    """
    theta = np.asarray(theta, dtype=np.float64)
    x = np.abs(data.samples @ theta)
    e = np.exp(-x)
    w = 2.0 * e / (1.0 + e * e)
    w *= w
    return (data.samples * w[:, None]).T @ data.samples / data.n
