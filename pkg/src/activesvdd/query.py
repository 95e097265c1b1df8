"""Query strategies and the adaptive boundary update.

The adaptive boundary tracks q, the fraction of all samples treated as
enclosed. Its threshold is the k-th smallest score with k = ceil(q * n)
over the whole dataset, and each stage moves q against the abnormal ratio
r of the latest query batch: more abnormal than half the batch shrinks q,
less grows it, with a floor at Q_FLOOR and a special averaging step when q
sits exactly at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Q_FLOOR",
    "boundary_threshold",
    "query_ab",
    "query_hc",
    "query_db",
    "query_random",
    "update_q",
    "AdaptiveBoundaryState",
]

Q_FLOOR = 0.05

# q values are kept on a short decimal grid so that repeated updates do not
# accumulate binary representation dust (0.8 - 0.2 should be 0.6, not
# 0.6000000000000001). Pure no-op updates return q unchanged instead.
_Q_DECIMALS = 12


def _as_pool(scores, indices):
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("scores must be 1-d")
    if indices is None:
        idx = np.arange(s.size, dtype=np.int64)
    else:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.shape != s.shape:
            raise ValueError("indices must align with scores")
    return s, idx


def _check_budget(budget: int, pool: int) -> int:
    b = int(budget)
    if b < 1:
        raise ValueError("budget must be at least 1")
    if b > pool:
        raise ValueError(f"budget {b} exceeds pool size {pool}")
    return b


def boundary_threshold(all_scores, q: float) -> float:
    """k-th smallest score over all samples, k = ceil(q * n)."""
    s = np.asarray(all_scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("threshold needs a non-empty 1-d score vector")
    if not (0.0 < q <= 1.0):
        raise ValueError("q must lie in (0, 1]")
    n = s.size
    # slack keeps ceil exact when q * n is a whole number in binary floats
    k = int(math.ceil(q * n - 1e-9))
    k = min(max(k, 1), n)
    return float(np.partition(s, k - 1)[k - 1])


def query_ab(unlabeled_scores, threshold: float, budget: int, indices=None):
    """The budget samples whose scores sit closest to the boundary threshold.

    Returned in order of increasing |score - threshold|, ties broken by the
    smaller original index.
    """
    s, idx = _as_pool(unlabeled_scores, indices)
    b = _check_budget(budget, s.size)
    dist = np.abs(s - threshold)
    order = np.lexsort((idx, dist))
    return idx[order[:b]]


def query_hc(unlabeled_scores, budget: int, indices=None):
    """The budget highest-scoring samples, descending, ties by smaller index."""
    s, idx = _as_pool(unlabeled_scores, indices)
    b = _check_budget(budget, s.size)
    order = np.lexsort((idx, -s))
    return idx[order[:b]]


def query_db(unlabeled_scores, radius_sq: float | None, budget: int, indices=None):
    """The budget samples closest to the sphere boundary R^2.

    Only defined when a soft-boundary radius exists.
    """
    if radius_sq is None:
        raise ValueError("decision-boundary querying needs a soft-boundary radius")
    s, idx = _as_pool(unlabeled_scores, indices)
    b = _check_budget(budget, s.size)
    dist = np.abs(s - float(radius_sq))
    order = np.lexsort((idx, dist))
    return idx[order[:b]]


def query_random(unlabeled_indices, budget: int, rng) -> np.ndarray:
    """Uniform sample without replacement from the pool, seeded."""
    idx = np.asarray(unlabeled_indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("indices must be 1-d")
    b = _check_budget(budget, idx.size)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return rng.choice(idx, size=b, replace=False)


def update_q(q_t: float, q_prev: float, r_t: float) -> float:
    """Next enclosed fraction given this stage's abnormal ratio.

    q_{t+1} = q_t - 2 (1 - q_t)(r_t - 0.5), clamped to [Q_FLOOR, 1]. When
    q_t is exactly 1 the step is undefined, so the update averages q_t with
    the previous stage's value instead.
    """
    if not (Q_FLOOR <= q_t <= 1.0):
        raise ValueError(f"q_t must lie in [{Q_FLOOR}, 1]")
    if not (Q_FLOOR <= q_prev <= 1.0):
        raise ValueError(f"q_prev must lie in [{Q_FLOOR}, 1]")
    if not (0.0 <= r_t <= 1.0):
        raise ValueError("r_t must lie in [0, 1]")
    if q_t == 1.0:
        q_next = round((q_t + q_prev) / 2.0, _Q_DECIMALS)
    else:
        delta = 2.0 * (1.0 - q_t) * (r_t - 0.5)
        if delta == 0.0:
            return q_t
        q_next = round(q_t - delta, _Q_DECIMALS)
    return min(max(q_next, Q_FLOOR), 1.0)


@dataclass
class AdaptiveBoundaryState:
    """q trajectory plus the per-stage abnormal ratios that drove it.

    q_history[0] is the configured starting fraction; one entry is appended
    per completed stage, so after t stages q_history holds q_1 .. q_{t+1}
    and r_history holds r_1 .. r_t.
    """

    q1: float = 0.8
    q_history: list = field(default_factory=list)
    r_history: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (Q_FLOOR <= self.q1 <= 1.0):
            raise ValueError(f"q1 must lie in [{Q_FLOOR}, 1]")
        if not self.q_history:
            self.q_history = [float(self.q1)]

    @property
    def q_current(self) -> float:
        return self.q_history[-1]

    def record_stage(self, r_t: float) -> float:
        """Apply one boundary update and return the new q."""
        q_prev = self.q_history[-2] if len(self.q_history) >= 2 else self.q_history[-1]
        q_next = update_q(self.q_current, q_prev, r_t)
        self.r_history.append(float(r_t))
        self.q_history.append(q_next)
        return q_next
