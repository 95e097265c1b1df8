"""Hypersphere one-class model: scores, objectives, center, and radius.

A sample's anomaly score is its squared distance to a fixed center in the
encoder's output space. The one-class objective is the mean score; the
soft-boundary objective charges nu * R^2 per sample plus the hinge excess
over R^2. The center is set once from the mean embedding and never moves,
and the encoder carries no bias terms; together with the snap-away-from-zero
rule below this blocks the trivial solution where everything maps onto the
center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import DenseNet

__all__ = [
    "OBJECTIVES",
    "SvddModel",
    "scores",
    "score",
    "init_center",
    "oc_loss",
    "sb_loss",
    "sample_losses",
    "base_loss",
    "score_gradient_weights",
    "update_radius",
    "effective_gradient",
    "save_model",
    "load_model",
]

OBJECTIVES = ("oc", "sb")

# Center coordinates closer to zero than this are pushed out to +/- CENTER_EPS.
CENTER_EPS = 0.1

# Epochs of soft-boundary training before the radius starts tracking scores.
RADIUS_WARMUP_EPOCHS = 10


@dataclass
class SvddModel:
    """Encoder, frozen center, and objective settings.

    radius_sq exists only under the soft-boundary objective; it defaults to
    0.0 there and must stay None for the one-class objective.
    """

    encoder: DenseNet
    center: np.ndarray
    objective: str = "oc"
    nu: float = 0.5
    radius_sq: float | None = None

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not (0.0 < self.nu <= 1.0):
            raise ValueError("nu must lie in (0, 1]")
        c = np.asarray(self.center, dtype=np.float64)
        if c.ndim != 1 or c.shape[0] != self.encoder.output_dim:
            raise ValueError("center must be 1-d and match the encoder output")
        if not np.all(np.isfinite(c)):
            raise ValueError("center must be finite")
        self.center = c
        if self.objective == "sb":
            self.radius_sq = 0.0 if self.radius_sq is None else float(self.radius_sq)
            if self.radius_sq < 0.0:
                raise ValueError("radius_sq must be non-negative")
        elif self.radius_sq is not None:
            raise ValueError("radius_sq is only meaningful for the soft boundary")


def scores(model: SvddModel, batch) -> np.ndarray:
    """Squared distance of each embedded row to the center."""
    out, _ = model.encoder.forward(batch)
    diff = out - model.center
    return np.sum(diff * diff, axis=1)


def score(model: SvddModel, x) -> float:
    return float(scores(model, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


def init_center(encoder: DenseNet, data, eps: float = CENTER_EPS) -> np.ndarray:
    """Mean embedding with small coordinates snapped out to +/- eps.

    Snapping keeps the center away from the all-zero point an empty
    (bias-free, zero-weight) encoder would map everything onto, so a
    collapsed representation still produces nonzero scores.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("center initialization needs a non-empty 2-d matrix")
    out, _ = encoder.forward(x)
    c = out.mean(axis=0)
    return np.where(np.abs(c) < eps, np.where(c >= 0.0, eps, -eps), c)


def oc_loss(model: SvddModel, batch) -> float:
    """Mean score over the batch."""
    s = scores(model, batch)
    if s.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(s))


def sb_loss(model: SvddModel, batch) -> float:
    """Mean of nu * R^2 + hinge excess over R^2, per sample."""
    if model.objective != "sb" or model.radius_sq is None:
        raise ValueError("soft-boundary loss needs a soft-boundary model")
    s = scores(model, batch)
    if s.size == 0:
        raise ValueError("empty batch")
    per_sample = model.nu * model.radius_sq + np.maximum(0.0, s - model.radius_sq)
    return float(np.mean(per_sample))


def sample_losses(model: SvddModel, batch) -> np.ndarray:
    """Per-sample objective value (the score itself for one-class)."""
    s = scores(model, batch)
    if model.objective == "oc":
        return s
    return model.nu * model.radius_sq + np.maximum(0.0, s - model.radius_sq)


def base_loss(model: SvddModel, batch) -> float:
    return oc_loss(model, batch) if model.objective == "oc" else sb_loss(model, batch)


def score_gradient_weights(model: SvddModel, s: np.ndarray) -> np.ndarray:
    """d(sample loss)/d(score): ones for one-class, hinge indicator for sb."""
    if model.objective == "oc":
        return np.ones_like(s)
    return (s > model.radius_sq).astype(np.float64)


def update_radius(model: SvddModel, all_scores) -> float:
    """Set R^2 to the empirical (1 - nu) quantile of the given scores.

    The k-th smallest score with k = ceil((1 - nu) * n), clamped to at
    least 1. Stores the value on the model and returns it.
    """
    if model.objective != "sb":
        raise ValueError("only a soft-boundary model carries a radius")
    s = np.asarray(all_scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("radius update needs a non-empty 1-d score vector")
    n = s.size
    # the tiny slack keeps ceil exact when (1 - nu) * n is a whole number
    k = int(math.ceil((1.0 - model.nu) * n - 1e-9))
    k = min(max(k, 1), n)
    r2 = float(np.partition(s, k - 1)[k - 1])
    model.radius_sq = r2
    return r2


def effective_gradient(model: SvddModel, data, i: int) -> float:
    """Alignment of sample i's score gradient with the batch mean gradient.

    Projects g_i = 2 (phi(x_i) - c) onto the normalized direction of the
    average gradient; returns 0 when g_i vanishes. Positive values mean the
    sample pulls the encoder the same way the bulk does.
    """
    x = np.asarray(data, dtype=np.float64)
    out, _ = model.encoder.forward(x)
    diffs = out - model.center
    if not (0 <= i < x.shape[0]):
        raise IndexError(f"sample index {i} out of range for n={x.shape[0]}")
    g_i = 2.0 * diffs[i]
    g_bar = 2.0 * diffs.mean(axis=0)
    norm = float(np.linalg.norm(g_i))
    if norm == 0.0:
        return 0.0
    return float(g_i @ g_bar / norm)


MODEL_FORMAT_VERSION = 1


def save_model(model: SvddModel, path) -> None:
    """Encoder arrays plus center, objective tag, nu, and radius."""
    arrays = {f"w{i}": w for i, w in enumerate(model.encoder.weights)}
    if model.encoder.bias_enabled:
        arrays.update({f"b{i}": b for i, b in enumerate(model.encoder.biases)})
    np.savez(
        path,
        format_version=np.int64(MODEL_FORMAT_VERSION),
        widths=np.asarray(model.encoder.widths, dtype=np.int64),
        bias_enabled=np.int64(1 if model.encoder.bias_enabled else 0),
        center=model.center,
        objective=np.str_(model.objective),
        nu=np.float64(model.nu),
        radius_sq=np.float64(np.nan if model.radius_sq is None else model.radius_sq),
        **arrays,
    )


def load_model(path) -> SvddModel:
    with np.load(path) as blob:
        version = int(blob["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        widths = tuple(int(w) for w in blob["widths"])
        bias_enabled = bool(int(blob["bias_enabled"]))
        encoder = DenseNet(widths, bias_enabled=bias_enabled)
        encoder.weights = [blob[f"w{i}"].copy() for i in range(len(widths) - 1)]
        if bias_enabled:
            encoder.biases = [blob[f"b{i}"].copy() for i in range(len(widths) - 1)]
        objective = str(blob["objective"])
        radius = float(blob["radius_sq"])
        return SvddModel(
            encoder=encoder,
            center=blob["center"].copy(),
            objective=objective,
            nu=float(blob["nu"]),
            radius_sq=None if math.isnan(radius) else radius,
        )
