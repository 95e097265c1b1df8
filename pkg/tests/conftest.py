"""Shared oracles for the test suite.

These deliberately re-derive results through slower, independent routes:
finite differences for gradients, explicit pair counting for AUC, full
sorts for order statistics. Tests compare the library's fast paths against
them rather than against the library itself.
"""

from __future__ import annotations

import numpy as np
import pytest


def finite_difference_grads(loss_fn, arrays, step=1e-5):
    """Central finite differences of loss_fn with respect to each array.

    Mutates each array element in place, calling loss_fn() around it, and
    restores the original value. Arrays must be float64.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            original = a[ix]
            a[ix] = original + step
            up = loss_fn()
            a[ix] = original - step
            down = loss_fn()
            a[ix] = original
            g[ix] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Worst elementwise |a - n| / max(floor, |a|, |n|) over array lists."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def pairwise_auc(scores, labels):
    """O(n^2) AUC oracle: count, over all (abnormal, normal) pairs, wins
    plus half credit for ties."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = s[y == 1]
    neg = s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def nce_loss_oracle(model, x, unlabeled, normals, abnormals, pseudo=None):
    """Plain double-loop recomputation of the contrastive objective."""
    import math

    from activesvdd.semisup import nce_pair_term
    from activesvdd.svdd import sample_losses, scores as score_fn

    pseudo = set() if pseudo is None else set(int(i) for i in pseudo)
    comp = sorted(
        (set(int(i) for i in unlabeled) - pseudo) | set(int(i) for i in normals)
    )
    losses = sample_losses(model, x[comp])
    term1 = sum(float(v) for v in losses) / len(comp)
    if len(normals) == 0 or len(abnormals) == 0:
        return term1
    s = score_fn(model, x)
    acc = 0.0
    for i in normals:
        for j in abnormals:
            h = nce_pair_term(float(s[i]), float(s[j]))
            h = min(h, 1.0 - 1e-12)
            acc += math.log(1.0 - h)
    return term1 - acc / (len(normals) + len(abnormals))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
