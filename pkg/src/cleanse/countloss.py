"""Log-space Poisson-binomial count distribution and the interval count loss.

Per-class label counts over a batch are sums of independent, non-identical
Bernoulli variables.  Their exact distribution is built by the O(n^2)
convolution recurrence

    P(count_n = k) = P(count_{n-1} = k-1) * p_n + P(count_{n-1} = k) * (1 - p_n)

carried out entirely in log space: products become additions and sums go
through ``logaddexp``/``logsumexp``, so a batch of 1024 near-zero
probabilities still produces finite log masses where the direct-space
product would underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_ZERO = float("-inf")

# Clamp floor for interval probabilities in nll mode: keeps the gradient
# finite (1/q <= e^700, still inside float64 range) without changing its sign.
MIN_LOG_PROB = -700.0

_LOG_HALF = -math.log(2.0)


def log1mexp(x: float) -> float:
    """Compute log(1 - exp(x)) for x <= 0 without catastrophic cancellation.

    Uses log(-expm1(x)) when x > -ln 2 (exp(x) close to 1) and
    log1p(-exp(x)) otherwise, the standard two-branch scheme.  x = 0 maps
    to -inf (probability zero).
    """
    if x > 0.0:
        raise ValueError(f"log1mexp requires x <= 0, got {x}")
    if x == 0.0:
        return LOG_ZERO
    if x > _LOG_HALF:
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def log1mexp_vec(x: np.ndarray) -> np.ndarray:
    """Vectorized ``log1mexp`` over an array of log-probabilities."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x > 0.0):
        raise ValueError("log1mexp requires all inputs <= 0")
    out = np.empty_like(x)
    near_one = x > _LOG_HALF
    with np.errstate(divide="ignore"):
        out[near_one] = np.log(-np.expm1(x[near_one]))
        out[~near_one] = np.log1p(-np.exp(x[~near_one]))
    return out


def logsumexp(xs) -> float:
    """log(sum(exp(xs))) via max-shift; an all--inf input returns -inf."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise ValueError("logsumexp of an empty sequence")
    m = float(np.max(xs))
    if m == LOG_ZERO:
        return LOG_ZERO
    return m + math.log(float(np.sum(np.exp(xs - m))))


@dataclass(frozen=True)
class CountDistribution:
    """Exact distribution of a per-class label count over n instances.

    ``log_pmf[k]`` is the natural-log probability that exactly k of the n
    instances carry the label; the vector has length n + 1 and its
    exponentials sum to 1.
    """

    log_pmf: np.ndarray

    @property
    def n(self) -> int:
        return len(self.log_pmf) - 1


@dataclass(frozen=True)
class CountInterval:
    """Inclusive [lo, hi] range the per-class count is constrained to."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise ValueError(f"invalid count interval [{self.lo}, {self.hi}]")


def count_log_pmf(log_p: np.ndarray) -> CountDistribution:
    """Log-pmf of the sum of independent Bernoullis with log-probs ``log_p``.

    Runs the convolution recurrence in place, high count to low, so working
    memory stays O(n) while time is O(n^2).
    """
    log_p = np.asarray(log_p, dtype=np.float64)
    if np.any(log_p > 0.0):
        raise ValueError("count_log_pmf requires log-probabilities <= 0")
    n = len(log_p)
    log_q = log1mexp_vec(log_p)

    pmf = np.full(n + 1, LOG_ZERO)
    pmf[0] = 0.0
    for i in range(n):
        lp, lq = log_p[i], log_q[i]
        # In-place right-to-left update: pmf[k] still holds the previous
        # row's value when pmf[k+1] is written.
        hi = i + 1
        pmf[1 : hi + 1] = np.logaddexp(pmf[0:hi] + lp, pmf[1 : hi + 1] + lq)
        pmf[0] = pmf[0] + lq
    return CountDistribution(log_pmf=pmf)


def interval_log_prob(dist: CountDistribution, interval: CountInterval) -> float:
    """log P(lo <= count <= hi): logsumexp over the pmf slice."""
    if interval.hi > dist.n:
        raise ValueError(
            f"interval [{interval.lo}, {interval.hi}] exceeds support 0..{dist.n}"
        )
    return logsumexp(dist.log_pmf[interval.lo : interval.hi + 1])


def batch_intervals(candidates, m: int) -> list[CountInterval]:
    """Per-class count bounds from a batch's candidate sets.

    For class j the lower bound is the number of clean samples labeled j
    (those counts are certain) and the upper bound adds every partial
    sample that still lists j as a candidate.
    """
    if len(candidates) == 0:
        raise ValueError("batch_intervals requires a nonempty batch")
    lo = np.zeros(m, dtype=np.int64)
    extra = np.zeros(m, dtype=np.int64)
    for cs in candidates:
        if cs.is_clean():
            lo[cs.sole()] += 1
        else:
            for j in cs.labels():
                extra[j] += 1
    return [CountInterval(int(lo[j]), int(lo[j] + extra[j])) for j in range(m)]


@dataclass(frozen=True)
class CountLossResult:
    """Value and exact gradient of the count objective over one batch."""

    loss: float
    grad: np.ndarray  # d loss / d batch_probs[i][j]
    saturated: bool  # an interval probability hit the clamp floor


def _forward_lattice(log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """All DP rows: lattice[i][k] = log P(count over first i items == k)."""
    n = len(log_p)
    lattice = np.full((n + 1, n + 1), LOG_ZERO)
    lattice[0, 0] = 0.0
    for i in range(n):
        prev = lattice[i]
        hi = i + 1
        lattice[i + 1, 0] = prev[0] + log_q[i]
        lattice[i + 1, 1 : hi + 1] = np.logaddexp(
            prev[0:hi] + log_p[i], prev[1 : hi + 1] + log_q[i]
        )
    return lattice


def _interval_grad(
    lattice: np.ndarray, log_p: np.ndarray, log_q: np.ndarray, interval: CountInterval
) -> np.ndarray:
    """d q / d p_i for q = P(count in interval), by adjoint pass over the DP.

    The adjoint of lattice row i is itself a vector of probabilities
    (chance the interval is hit given the partial count), so the backward
    recurrence also runs in log space.  Each derivative is recovered as

        dq/dp_i = P(interval | item i forced success)
                - P(interval | item i forced failure),

    a difference of two well-scaled probabilities.
    """
    n = len(log_p)
    grad = np.zeros(n)
    # bar[k] = log d q / d lattice[i+1][k], seeded by the interval indicator.
    bar = np.full(n + 1, LOG_ZERO)
    bar[interval.lo : interval.hi + 1] = 0.0
    for i in range(n - 1, -1, -1):
        prev = lattice[i]
        # success-forced: count k at row i+1 came from k-1 at row i
        forced_success = logsumexp(bar[1:] + prev[:-1])
        forced_failure = logsumexp(bar + prev)
        grad[i] = math.exp(forced_success) - math.exp(forced_failure)
        # pull the adjoint back one row: bar_i[k] = lse(bar[k+1]+lp, bar[k]+lq)
        shifted = np.full(n + 1, LOG_ZERO)
        shifted[:-1] = bar[1:]
        bar = np.logaddexp(shifted + log_p[i], bar + log_q[i])
    return grad


def count_loss(
    batch_probs: np.ndarray,
    intervals,
    mode: str = "nll",
) -> CountLossResult:
    """Count objective and its exact gradient w.r.t. the prediction matrix.

    Per class j the batch column is treated as independent Bernoulli
    probabilities, q_j = P(count_j in intervals[j]) comes out of the DP, and
    the per-class terms are summed:

    * ``nll``     : sum_j -log q_j (clamped at ``MIN_LOG_PROB``; hitting the
      clamp raises the ``saturated`` flag instead of returning +inf).
    * ``entropy`` : sum_j -q_j log q_j with the 0*log 0 -> 0 convention.

    Gradients flow through the DP by reverse accumulation, O(n^2) per class.
    """
    if mode not in ("nll", "entropy"):
        raise ValueError(f"unknown count-loss mode {mode!r}")
    probs = np.asarray(batch_probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("batch_probs must be a 2-D matrix")
    n, m = probs.shape
    if len(intervals) != m:
        raise ValueError(f"expected {m} intervals, got {len(intervals)}")

    total = 0.0
    grad = np.zeros((n, m))
    saturated = False
    for j, interval in enumerate(intervals):
        if interval.hi > n:
            raise ValueError(
                f"interval [{interval.lo}, {interval.hi}] exceeds batch size {n}"
            )
        with np.errstate(divide="ignore"):
            log_p = np.log(probs[:, j])
        log_q = log1mexp_vec(log_p)
        lattice = _forward_lattice(log_p, log_q)
        log_qj = logsumexp(lattice[n, interval.lo : interval.hi + 1])
        dq_dp = _interval_grad(lattice, log_p, log_q, interval)

        if mode == "nll":
            if log_qj < MIN_LOG_PROB:
                log_qj = MIN_LOG_PROB
                saturated = True
            total += -log_qj
            grad[:, j] = (-1.0 / math.exp(log_qj)) * dq_dp
        else:
            if log_qj == LOG_ZERO:
                continue  # -q log q and its gradient both vanish at q = 0
            qj = math.exp(log_qj)
            total += -qj * log_qj
            grad[:, j] = -(log_qj + 1.0) * dq_dp
    return CountLossResult(loss=total, grad=grad, saturated=saturated)
