"""Active-learning orchestration: initial training, stages, experiments.

One run proceeds as: pretrain an autoencoder on all samples, set the
center from the mean embedding, fine-tune the base objective (stage 0),
then for each stage query a batch of unlabeled samples, collect labels,
freeze the pseudo-abnormal set, retrain warm-started under the configured
semi-supervised loss, and update the adaptive boundary. The batch runner
answers queries from ground truth; the HTTP service drives the identical
object with human labels, so equal labels give bit-identical trajectories.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np

from .data import Dataset, round_half_up, standardize
from .evaluation import StageMetrics, auc
from .nn import Adam, DenseNet, minibatches, pretrain_autoencoder
from .query import (
    AdaptiveBoundaryState,
    boundary_threshold,
    query_ab,
    query_db,
    query_hc,
    query_random,
)
from .semisup import (
    SSL_METHODS,
    LabelState,
    compactness_indices,
    pseudo_abnormal,
    ssl_gradients,
    ssl_loss,
)
from .svdd import (
    OBJECTIVES,
    RADIUS_WARMUP_EPOCHS,
    SvddModel,
    init_center,
    scores,
    update_radius,
)

__all__ = [
    "STRATEGIES",
    "ActiveLoopConfig",
    "resolve_budget",
    "Oracle",
    "GroundTruthOracle",
    "StageRecord",
    "ActiveRun",
    "run_single",
    "run_experiment",
    "collect_metrics",
]

STRATEGIES = ("ab", "hc", "db", "random")


@dataclass
class ActiveLoopConfig:
    """Everything one seeded run needs besides the data itself."""

    objective: str = "oc"
    strategy: str = "ab"
    ssl_method: str = "nce"
    nu: float = 0.5
    eta: float = 1.0
    q1: float = 0.8
    widths: tuple = (32, 16, 8)
    stages: int = 5
    budget_fraction: float = 0.01
    min_n_for_fraction: int = 500
    small_budget: int = 6
    pretrain_epochs: int = 100
    finetune_epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.ssl_method not in SSL_METHODS:
            raise ValueError(f"ssl method must be one of {SSL_METHODS}")
        if self.strategy == "db" and self.objective != "sb":
            raise ValueError(
                "decision-boundary querying needs the soft-boundary objective"
            )
        if not (0.0 < self.nu <= 1.0):
            raise ValueError("nu must lie in (0, 1]")
        if not (0.05 <= self.q1 <= 1.0):
            raise ValueError("q1 must lie in [0.05, 1]")
        self.widths = tuple(int(w) for w in self.widths)
        if not self.widths or min(self.widths) < 1:
            raise ValueError("widths must be non-empty positive sizes")
        if self.stages < 1:
            raise ValueError("stages must be at least 1")
        if not (0.0 < self.budget_fraction <= 1.0):
            raise ValueError("budget_fraction must lie in (0, 1]")
        if self.small_budget < 1:
            raise ValueError("small_budget must be at least 1")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 1:
            raise ValueError("epoch counts out of range")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr and batch_size must be positive")


def resolve_budget(n: int, config: ActiveLoopConfig) -> int:
    """Per-stage labeling budget: a rounded fraction of n, with a small-n floor."""
    if n < config.min_n_for_fraction:
        return config.small_budget
    return max(round_half_up(config.budget_fraction * n), 1)


class Oracle(Protocol):
    def label(self, index: int) -> int: ...


class GroundTruthOracle:
    """Answers queries from the dataset's hidden labels."""

    def __init__(self, labels):
        self._labels = np.asarray(labels)

    def label(self, index: int) -> int:
        return int(self._labels[index])


@dataclass
class StageRecord:
    """Bookkeeping for one stage (stage 0 carries only the fine-tune trace)."""

    stage: int
    queried: list = field(default_factory=list)
    queried_normal: list = field(default_factory=list)
    queried_abnormal: list = field(default_factory=list)
    r: float | None = None
    q_used: float | None = None
    q_next: float | None = None
    n_labeled_normal: int = 0
    n_labeled_abnormal: int = 0
    loss_trace: list = field(default_factory=list)
    auc: float | None = None

    def loss_summary(self) -> dict | None:
        if not self.loss_trace:
            return None
        return {
            "first": self.loss_trace[0],
            "last": self.loss_trace[-1],
            "min": min(self.loss_trace),
        }

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "queried": [int(i) for i in self.queried],
            "queried_normal": [int(i) for i in self.queried_normal],
            "queried_abnormal": [int(i) for i in self.queried_abnormal],
            "r": self.r,
            "q": self.q_used,
            "q_next": self.q_next,
            "n_labeled_normal": self.n_labeled_normal,
            "n_labeled_abnormal": self.n_labeled_abnormal,
            "loss": self.loss_summary(),
            "loss_trace": list(self.loss_trace),
            "auc": self.auc,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StageRecord":
        return cls(
            stage=int(doc["stage"]),
            queried=list(doc.get("queried", [])),
            queried_normal=list(doc.get("queried_normal", [])),
            queried_abnormal=list(doc.get("queried_abnormal", [])),
            r=doc.get("r"),
            q_used=doc.get("q"),
            q_next=doc.get("q_next"),
            n_labeled_normal=int(doc.get("n_labeled_normal", 0)),
            n_labeled_abnormal=int(doc.get("n_labeled_abnormal", 0)),
            loss_trace=list(doc.get("loss_trace", [])),
            auc=doc.get("auc"),
        )


class ActiveRun:
    """State of one seeded run; training code never sees any label source.

    Drive it as: initialize(), then per stage start_stage() to get the
    query indices and complete_stage(labels) once every index has an
    answer. The caller owns the oracle, whether simulated or human.
    """

    def __init__(self, config: ActiveLoopConfig, features):
        self.config = config
        x = np.array(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("features must be a non-empty 2-d matrix")
        x.setflags(write=False)
        self.features = x
        self.n, self.d = x.shape
        self.budget = resolve_budget(self.n, config)
        self.rng = np.random.default_rng(config.seed)
        self.model: SvddModel | None = None
        self.label_state = LabelState.fresh(self.n)
        self.ab_state = AdaptiveBoundaryState(q1=config.q1)
        self.all_scores: np.ndarray | None = None
        self.records: list[StageRecord] = []
        self.stage = 0
        self.pretrain_trace: list = []
        self._pending: np.ndarray | None = None
        self._pending_threshold: float | None = None

    # -- initial training ---------------------------------------------------

    def _cache_key(self) -> tuple:
        cfg = self.config
        digest = hashlib.sha256(self.features.tobytes()).hexdigest()
        return (
            digest,
            self.features.shape,
            cfg.objective,
            cfg.nu,
            cfg.widths,
            cfg.pretrain_epochs,
            cfg.finetune_epochs,
            cfg.lr,
            cfg.batch_size,
            cfg.seed,
        )

    def initialize(self, cache: dict | None = None) -> None:
        """Pretrain, set the center, fine-tune the base objective (stage 0).

        An optional cache shares this stage-0 work between runs that differ
        only in strategy or semi-supervised method; the cached model, rng
        continuation, and scores are restored verbatim.
        """
        if self.model is not None:
            raise RuntimeError("run is already initialized")
        key = self._cache_key() if cache is not None else None
        if cache is not None and key in cache:
            self._restore_initial(cache[key])
            return
        cfg = self.config
        encoder = DenseNet((self.d, *cfg.widths), bias_enabled=False, rng=self.rng)
        encoder, self.pretrain_trace = pretrain_autoencoder(
            encoder,
            self.features,
            epochs=cfg.pretrain_epochs,
            batch_size=cfg.batch_size,
            rng=self.rng,
        )
        center = init_center(encoder, self.features)
        self.model = SvddModel(
            encoder=encoder,
            center=center,
            objective=cfg.objective,
            nu=cfg.nu,
            radius_sq=0.0 if cfg.objective == "sb" else None,
        )
        trace = self._fit(
            epochs=cfg.finetune_epochs,
            method="exclude",
            pseudo=None,
            radius_warmup=RADIUS_WARMUP_EPOCHS,
        )
        self.all_scores = scores(self.model, self.features)
        self.records.append(StageRecord(stage=0, loss_trace=trace))
        if cache is not None:
            cache[key] = self._snapshot_initial()

    def _snapshot_initial(self) -> dict:
        return {
            "weights": [w.copy() for w in self.model.encoder.weights],
            "center": self.model.center.copy(),
            "radius_sq": self.model.radius_sq,
            "scores": self.all_scores.copy(),
            "rng_state": copy.deepcopy(self.rng.bit_generator.state),
            "pretrain_trace": list(self.pretrain_trace),
            "record0": copy.deepcopy(self.records[0]),
        }

    def _restore_initial(self, snap: dict) -> None:
        cfg = self.config
        encoder = DenseNet((self.d, *cfg.widths), bias_enabled=False)
        encoder.weights = [w.copy() for w in snap["weights"]]
        self.model = SvddModel(
            encoder=encoder,
            center=snap["center"].copy(),
            objective=cfg.objective,
            nu=cfg.nu,
            radius_sq=snap["radius_sq"],
        )
        self.all_scores = snap["scores"].copy()
        self.rng.bit_generator.state = copy.deepcopy(snap["rng_state"])
        self.pretrain_trace = list(snap["pretrain_trace"])
        self.records.append(copy.deepcopy(snap["record0"]))

    # -- training -----------------------------------------------------------

    def _fit(self, epochs: int, method: str, pseudo, radius_warmup: int | None) -> list:
        """Warm-start training under the configured objective.

        The compactness term is mini-batched over its index set; pairwise
        and inverse-score terms always cover the full labeled sets. Under
        the soft boundary the radius re-fits to the full score vector once
        per epoch, after the warm-up when one is given.
        """
        cfg = self.config
        state = self.label_state
        if method == "nce":
            comp = compactness_indices(state.unlabeled, state.normals, pseudo)
        else:
            comp = np.union1d(state.unlabeled, state.normals)
        if comp.size == 0:
            raise RuntimeError("compactness set is empty; nothing to train on")
        params = self.model.encoder.params()
        opt = Adam(params, lr=cfg.lr)
        trace: list[float] = []
        for epoch in range(epochs):
            for pos in minibatches(comp.size, cfg.batch_size, self.rng):
                grads = ssl_gradients(
                    self.model,
                    self.features,
                    comp[pos],
                    state.normals,
                    state.abnormals,
                    method,
                    eta=cfg.eta,
                )
                opt.step(params, grads)
            if self.model.objective == "sb" and (
                radius_warmup is None or epoch >= radius_warmup
            ):
                update_radius(self.model, scores(self.model, self.features))
            trace.append(
                ssl_loss(
                    self.model,
                    self.features,
                    state.unlabeled,
                    state.normals,
                    state.abnormals,
                    method,
                    eta=cfg.eta,
                    pseudo=pseudo,
                )
            )
        return trace

    # -- stages -------------------------------------------------------------

    def start_stage(self) -> np.ndarray:
        """Choose and freeze this stage's query batch; idempotent until completed."""
        if self.model is None:
            raise RuntimeError("run is not initialized")
        if self.stage >= self.config.stages:
            raise RuntimeError("all stages are already complete")
        if self._pending is not None:
            return self._pending.copy()
        pool = self.label_state.unlabeled
        if pool.size < self.budget:
            raise RuntimeError(
                f"unlabeled pool ({pool.size}) smaller than the budget ({self.budget})"
            )
        pool_scores = self.all_scores[pool]
        strategy = self.config.strategy
        if strategy == "ab":
            threshold = boundary_threshold(self.all_scores, self.ab_state.q_current)
            chosen = query_ab(pool_scores, threshold, self.budget, indices=pool)
            self._pending_threshold = threshold
        elif strategy == "hc":
            chosen = query_hc(pool_scores, self.budget, indices=pool)
            self._pending_threshold = None
        elif strategy == "db":
            chosen = query_db(
                pool_scores, self.model.radius_sq, self.budget, indices=pool
            )
            self._pending_threshold = self.model.radius_sq
        else:
            chosen = query_random(pool, self.budget, self.rng)
            self._pending_threshold = None
        self._pending = np.asarray(chosen, dtype=np.int64)
        return self._pending.copy()

    @property
    def pending(self) -> np.ndarray | None:
        return None if self._pending is None else self._pending.copy()

    @property
    def pending_threshold(self) -> float | None:
        return self._pending_threshold

    def complete_stage(self, labels: Mapping[int, int]) -> StageRecord:
        """Apply the labels for the frozen batch, retrain, update the boundary."""
        if self._pending is None:
            raise RuntimeError("no pending query batch; call start_stage first")
        pending = self._pending
        if set(int(k) for k in labels) != set(int(i) for i in pending):
            raise ValueError("labels must cover exactly the queried indices")
        queried_normal, queried_abnormal = self.label_state.apply_labels(
            {int(k): int(v) for k, v in labels.items()}
        )
        # pseudo-abnormal set from the scores the stage started with,
        # after this stage's queried indices left the pool
        pseudo = pseudo_abnormal(
            self.all_scores, self.label_state.unlabeled, self.label_state.abnormals
        )
        trace = self._fit(
            epochs=self.config.finetune_epochs,
            method=self.config.ssl_method,
            pseudo=pseudo,
            radius_warmup=None,
        )
        r = queried_abnormal.size / self.budget
        q_used = self.ab_state.q_current
        q_next = self.ab_state.record_stage(r)
        self.all_scores = scores(self.model, self.features)
        self.stage += 1
        record = StageRecord(
            stage=self.stage,
            queried=[int(i) for i in pending],
            queried_normal=[int(i) for i in queried_normal],
            queried_abnormal=[int(i) for i in queried_abnormal],
            r=float(r),
            q_used=float(q_used),
            q_next=float(q_next),
            n_labeled_normal=int(self.label_state.normals.size),
            n_labeled_abnormal=int(self.label_state.abnormals.size),
            loss_trace=trace,
        )
        self.records.append(record)
        self._pending = None
        self._pending_threshold = None
        return record

    @property
    def done(self) -> bool:
        return self.stage >= self.config.stages


def collect_metrics(dataset_name: str, config: ActiveLoopConfig, run: ActiveRun) -> StageMetrics:
    records = run.records
    return StageMetrics(
        dataset=dataset_name,
        objective=config.objective,
        strategy=config.strategy,
        ssl_method=config.ssl_method,
        seed=config.seed,
        auc=[rec.auc for rec in records],
        r=[rec.r for rec in records[1:]],
        q_used=[rec.q_used for rec in records[1:]],
        q_next=[rec.q_next for rec in records[1:]],
        n_labeled_normal=[rec.n_labeled_normal for rec in records[1:]],
        n_labeled_abnormal=[rec.n_labeled_abnormal for rec in records[1:]],
        loss=[rec.loss_summary() for rec in records],
    )


def run_single(
    config: ActiveLoopConfig, dataset: Dataset, cache: dict | None = None
) -> StageMetrics:
    """One seeded run against the ground-truth oracle (expects standardized data)."""
    run = ActiveRun(config, dataset.features)
    run.initialize(cache=cache)
    oracle = GroundTruthOracle(dataset.labels)
    run.records[0].auc = auc(run.all_scores, dataset.labels)
    for _ in range(config.stages):
        chosen = run.start_stage()
        answers = {int(i): oracle.label(int(i)) for i in chosen}
        record = run.complete_stage(answers)
        record.auc = auc(run.all_scores, dataset.labels)
    return collect_metrics(dataset.name, config, run)


def run_experiment(
    config: ActiveLoopConfig, dataset: Dataset, seeds, cache: dict | None = None
) -> list[StageMetrics]:
    """Standardize once, then run every seed; returns one StageMetrics per seed."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must be non-empty")
    prepared = standardize(dataset)
    out = []
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed)
        out.append(run_single(cfg, prepared, cache=cache))
    return out
