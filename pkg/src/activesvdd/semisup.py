"""Semi-supervised objectives over labeled and unlabeled index sets.

The contrastive loss keeps one compactness term (mean base loss over the
unlabeled pool plus labeled normals, minus the pseudo-abnormal indices) and
adds one pairwise term: for every labeled normal i and labeled abnormal j,
with h = s_i / (s_i + s_j), it charges -ln(1 - h) so that normals want
small scores exactly where abnormals have large ones. Gradients flow
through both scores of every pair. Two baselines share the bookkeeping:
an inverse-score pull-up on labeled anomalies, and plain exclusion of
labeled anomalies from the base loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .svdd import SvddModel, sample_losses, score_gradient_weights, scores

__all__ = [
    "PAIR_EPS",
    "DSAD_EPS",
    "SSL_METHODS",
    "LabelState",
    "pseudo_abnormal",
    "nce_pair_term",
    "nce_loss",
    "dsad_loss",
    "exclusion_loss",
    "compactness_indices",
    "ssl_loss",
    "ssl_gradients",
]

# Guards the contrast ratio only when both scores have essentially vanished.
PAIR_EPS = 1e-9
# Guards the inverse-score anomaly term.
DSAD_EPS = 1e-6
# Keeps -ln(1 - h) finite when a pair degenerates to h = 1.
_H_MAX = 1.0 - 1e-12

SSL_METHODS = ("nce", "dsad", "exclude")


def _as_index_array(values) -> np.ndarray:
    idx = np.asarray(values, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("index sets must be 1-d")
    return idx


@dataclass
class LabelState:
    """Disjoint partition of sample indices into unlabeled / normal / abnormal.

    Arrays stay sorted. history records each stage's queried indices split
    by the received label.
    """

    n: int
    unlabeled: np.ndarray
    normals: np.ndarray
    abnormals: np.ndarray
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, n: int) -> "LabelState":
        if n < 1:
            raise ValueError("n must be positive")
        return cls(
            n=int(n),
            unlabeled=np.arange(n, dtype=np.int64),
            normals=np.array([], dtype=np.int64),
            abnormals=np.array([], dtype=np.int64),
        )

    def check(self) -> None:
        parts = np.concatenate([self.unlabeled, self.normals, self.abnormals])
        if parts.size != self.n or np.unique(parts).size != self.n:
            raise ValueError("label sets no longer partition the dataset")

    def apply_labels(self, labels) -> tuple[np.ndarray, np.ndarray]:
        """Move the given indices out of the unlabeled pool.

        labels maps sample index to 0 (normal) or 1 (abnormal). Returns the
        (queried-normal, queried-abnormal) index arrays, each sorted.
        """
        idx = _as_index_array(sorted(labels))
        if idx.size == 0:
            raise ValueError("no labels supplied")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate indices in label batch")
        if not np.all(np.isin(idx, self.unlabeled)):
            raise ValueError("labels refer to indices outside the unlabeled pool")
        values = {int(i): int(labels[i]) for i in idx}
        if any(v not in (0, 1) for v in values.values()):
            raise ValueError("label values must be 0 or 1")
        queried_normal = np.array(
            [i for i in idx if values[int(i)] == 0], dtype=np.int64
        )
        queried_abnormal = np.array(
            [i for i in idx if values[int(i)] == 1], dtype=np.int64
        )
        self.unlabeled = np.setdiff1d(self.unlabeled, idx)
        self.normals = np.union1d(self.normals, queried_normal)
        self.abnormals = np.union1d(self.abnormals, queried_abnormal)
        self.history.append((queried_normal, queried_abnormal))
        self.check()
        return queried_normal, queried_abnormal


def pseudo_abnormal(all_scores, unlabeled, abnormals) -> np.ndarray:
    """Unlabeled indices scoring strictly above the labeled-abnormal median.

    Scores must come from the model as it stood at stage start; the set is
    frozen for the whole retraining phase. Empty when nothing abnormal has
    been labeled yet.
    """
    la = _as_index_array(abnormals)
    if la.size == 0:
        return np.array([], dtype=np.int64)
    s = np.asarray(all_scores, dtype=np.float64)
    u = _as_index_array(unlabeled)
    median = np.median(s[la])
    return u[s[u] > median]


def nce_pair_term(s_i: float, s_j: float) -> float:
    """Contrast ratio h for one (normal, abnormal) score pair.

    The denominator is padded only when both scores have collapsed below
    PAIR_EPS, so ordinary pairs keep their exact ratio.
    """
    if s_i < 0.0 or s_j < 0.0:
        raise ValueError("scores are squared distances and cannot be negative")
    denom = s_i + s_j
    if s_i < PAIR_EPS and s_j < PAIR_EPS:
        denom = denom + PAIR_EPS
    return float(s_i / denom)


def _pair_matrix(s_n: np.ndarray, s_a: np.ndarray) -> np.ndarray:
    denom = s_n[:, None] + s_a[None, :]
    tiny = (s_n[:, None] < PAIR_EPS) & (s_a[None, :] < PAIR_EPS)
    denom = denom + tiny * PAIR_EPS
    h = s_n[:, None] / denom
    return np.minimum(h, _H_MAX)


def compactness_indices(unlabeled, normals, pseudo=None) -> np.ndarray:
    """Sorted indices feeding the compactness term: (U \\ pseudo) plus L_N."""
    u = _as_index_array(unlabeled)
    ln = _as_index_array(normals)
    if pseudo is not None and len(pseudo) > 0:
        u = np.setdiff1d(u, _as_index_array(pseudo))
    return np.union1d(u, ln)


def nce_loss(
    model: SvddModel, features, unlabeled, normals, abnormals, pseudo=None
) -> float:
    """Compactness term plus the normalized sum of pair penalties.

    With no labeled samples at all this reduces to the plain base loss over
    the unlabeled pool, bit for bit.
    """
    comp = compactness_indices(unlabeled, normals, pseudo)
    if comp.size == 0:
        raise ValueError("compactness set is empty; nothing left to train on")
    x = np.asarray(features, dtype=np.float64)
    term1 = float(np.mean(sample_losses(model, x[comp])))
    ln = _as_index_array(normals)
    la = _as_index_array(abnormals)
    if ln.size == 0 or la.size == 0:
        return term1
    s_n = scores(model, x[ln])
    s_a = scores(model, x[la])
    h = _pair_matrix(s_n, s_a)
    term2 = -(1.0 / (ln.size + la.size)) * float(np.sum(np.log1p(-h)))
    return term1 + term2


def dsad_loss(
    model: SvddModel, features, unlabeled, normals, abnormals, eta: float = 1.0
) -> float:
    """Mean score over U and L_N plus eta times mean inverse abnormal score."""
    comp = np.union1d(_as_index_array(unlabeled), _as_index_array(normals))
    if comp.size == 0:
        raise ValueError("no unlabeled or labeled-normal samples to train on")
    x = np.asarray(features, dtype=np.float64)
    loss = float(np.mean(scores(model, x[comp])))
    la = _as_index_array(abnormals)
    if la.size:
        s_a = scores(model, x[la])
        loss += float(eta) * float(np.mean(1.0 / (s_a + DSAD_EPS)))
    return loss


def exclusion_loss(model: SvddModel, features, unlabeled, normals) -> float:
    """Base objective over U and L_N only; labeled anomalies contribute nothing."""
    comp = np.union1d(_as_index_array(unlabeled), _as_index_array(normals))
    if comp.size == 0:
        raise ValueError("no unlabeled or labeled-normal samples to train on")
    x = np.asarray(features, dtype=np.float64)
    return float(np.mean(sample_losses(model, x[comp])))


def ssl_loss(
    model: SvddModel,
    features,
    unlabeled,
    normals,
    abnormals,
    method: str,
    eta: float = 1.0,
    pseudo=None,
) -> float:
    if method == "nce":
        return nce_loss(model, features, unlabeled, normals, abnormals, pseudo)
    if method == "dsad":
        return dsad_loss(model, features, unlabeled, normals, abnormals, eta)
    if method == "exclude":
        return exclusion_loss(model, features, unlabeled, normals)
    raise ValueError(f"unknown semi-supervised method {method!r}")


def ssl_gradients(
    model: SvddModel,
    features,
    comp_rows,
    normals,
    abnormals,
    method: str,
    eta: float = 1.0,
) -> list[np.ndarray]:
    """Encoder parameter gradients for one optimization step.

    comp_rows is the slice of the compactness set used this step (a
    mini-batch or the full set); the pairwise and inverse-score terms always
    run over the full labeled sets. Every score keeps its exact derivative,
    so a labeled normal appearing both in comp_rows and in a pair receives
    both contributions.
    """
    if method not in SSL_METHODS:
        raise ValueError(f"unknown semi-supervised method {method!r}")
    x = np.asarray(features, dtype=np.float64)
    comp = _as_index_array(comp_rows)
    if comp.size == 0:
        raise ValueError("empty compactness slice")
    ln = _as_index_array(normals)
    la = _as_index_array(abnormals)
    use_pairs = method == "nce" and ln.size > 0 and la.size > 0
    use_inverse = method == "dsad" and la.size > 0

    if use_pairs:
        rows = np.concatenate([comp, ln, la])
    elif use_inverse:
        rows = np.concatenate([comp, la])
    else:
        rows = comp
    out, tape = model.encoder.forward(x[rows])
    diff = out - model.center
    s = np.sum(diff * diff, axis=1)

    m = comp.size
    w = np.zeros(rows.size)
    w[:m] = score_gradient_weights(model, s[:m]) / m
    if use_pairs:
        s_n = s[m : m + ln.size]
        s_a = s[m + ln.size :]
        denom = s_n[:, None] + s_a[None, :]
        tiny = (s_n[:, None] < PAIR_EPS) & (s_a[None, :] < PAIR_EPS)
        denom = denom + tiny * PAIR_EPS
        inv = 1.0 / denom
        scale = 1.0 / (ln.size + la.size)
        w[m : m + ln.size] += scale * inv.sum(axis=1)
        w[m + ln.size :] += scale * (
            inv.sum(axis=0) - ln.size / np.maximum(s_a, PAIR_EPS)
        )
    elif use_inverse:
        s_a = s[m:]
        w[m:] += -float(eta) / la.size / (s_a + DSAD_EPS) ** 2

    dphi = (2.0 * diff) * w[:, None]
    grads, _ = model.encoder.backward(tape, dphi)
    return grads
