"""HTTP labeling service: the active loop driven by a human oracle.

Each session owns one seeded run. Creating a session trains the stage-0
model and freezes the first query batch; labels arrive one sample at a
time; advancing applies them, retrains in a background thread (the session
reports BUSY meanwhile), and freezes the next batch. Labels equal to
ground truth reproduce the batch runner's trajectory bit for bit, because
both paths drive the same run object with the same generator state.

State is persisted to disk on creation, after every label, and after every
completed stage, so a restarted service resumes where it stopped.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from .data import Dataset, standardize
from .evaluation import auc
from .loop import ActiveRun, StageRecord
from .nn import DenseNet
from .svdd import SvddModel

__all__ = ["API_VERSION", "Session", "SessionStore", "build_app", "embedding_projection"]

API_VERSION = 1

STATE_FILE = "state.json"
ARRAY_FILE = "arrays.npz"

_LABEL_VALUES = {0: 0, 1: 1, "0": 0, "1": 1, "normal": 0, "abnormal": 1}


def embedding_projection(model: SvddModel, features) -> np.ndarray:
    """Top-2 principal directions of the encoder outputs, zero mean.

    A display aid only; it never touches the run's generator. A single
    output dimension is padded with a zero column. Component signs are
    pinned so redraws stay stable.
    """
    out, _ = model.encoder.forward(features)
    centered = out - out.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[: min(2, vt.shape[0])].copy()
    for row in comps:
        peak = int(np.argmax(np.abs(row)))
        if row[peak] < 0:
            row *= -1.0
    proj = centered @ comps.T
    if proj.shape[1] < 2:
        proj = np.column_stack([proj, np.zeros(proj.shape[0])])
    return proj


class Session:
    """One live run plus the labels collected for its pending batch."""

    def __init__(self, sid: str, config_echo: dict, run: ActiveRun, dataset: Dataset):
        self.id = sid
        self.config_echo = config_echo
        self.run = run
        self.dataset = dataset
        self.received: dict[int, int] = {}
        self.status = "QUERY_PENDING"
        self.error: str | None = None
        self.lock = threading.Lock()
        self.worker: threading.Thread | None = None

    @property
    def auc_trace(self) -> list:
        return [rec.auc for rec in self.run.records]

    def ready(self) -> bool:
        pending = self.run.pending
        return pending is not None and len(self.received) == len(pending)

    def refresh_status(self) -> None:
        if self.status in ("BUSY", "DONE", "ERROR"):
            return
        self.status = "READY" if self.ready() else "QUERY_PENDING"


class SessionStore:
    """Disk-backed registry; sessions from earlier processes load lazily."""

    def __init__(self, state_dir):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session

    def get(self, sid: str) -> Session:
        with self._lock:
            if sid in self._sessions:
                return self._sessions[sid]
        session = self._load(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        with self._lock:
            self._sessions.setdefault(sid, session)
            return self._sessions[sid]

    def ids(self) -> list[str]:
        with self._lock:
            known = set(self._sessions)
        on_disk = {
            p.parent.name for p in self.state_dir.glob(f"*/{STATE_FILE}")
        }
        return sorted(known | on_disk)

    # -- persistence --------------------------------------------------------

    def persist(self, session: Session) -> None:
        run = session.run
        sdir = self.state_dir / session.id
        sdir.mkdir(parents=True, exist_ok=True)
        arrays: dict[str, np.ndarray] = {
            "raw_features": session.dataset.features,
            "labels": session.dataset.labels,
            "center": run.model.center,
            "all_scores": run.all_scores,
            "unlabeled": run.label_state.unlabeled,
            "normals": run.label_state.normals,
            "abnormals": run.label_state.abnormals,
        }
        for i, w in enumerate(run.model.encoder.weights):
            arrays[f"w{i}"] = w
        pending = run.pending
        arrays["pending"] = (
            np.array([], dtype=np.int64) if pending is None else pending
        )
        np.savez(sdir / ARRAY_FILE, **arrays)
        state = {
            "format_version": 1,
            "session_id": session.id,
            "config": session.config_echo,
            "status": session.status if session.status != "BUSY" else "READY",
            "error": session.error,
            "stage": run.stage,
            "budget": run.budget,
            "has_pending": pending is not None,
            "pending_threshold": run.pending_threshold,
            "q_history": list(run.ab_state.q_history),
            "r_history": list(run.ab_state.r_history),
            "received": {str(k): int(v) for k, v in session.received.items()},
            "records": [rec.to_dict() for rec in run.records],
            "pretrain_trace": list(run.pretrain_trace),
            "radius_sq": run.model.radius_sq,
            "rng_state": run.rng.bit_generator.state,
            "dataset_name": session.dataset.name,
            "feature_names": list(session.dataset.feature_names),
        }
        tmp = sdir / (STATE_FILE + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(state, fh)
        tmp.replace(sdir / STATE_FILE)

    def _load(self, sid: str) -> Session | None:
        sdir = self.state_dir / sid
        state_path = sdir / STATE_FILE
        if not state_path.is_file():
            return None
        with open(state_path, encoding="utf-8") as fh:
            state = json.load(fh)
        blob = np.load(sdir / ARRAY_FILE)
        dataset = Dataset(
            blob["raw_features"],
            blob["labels"],
            name=state["dataset_name"],
            feature_names=list(state["feature_names"]),
        )
        from .cli import parse_config  # late import; cli imports us lazily too

        parsed = parse_config(state["config"])
        run = ActiveRun(parsed.loop, standardize(dataset).features)
        widths = (run.d, *parsed.loop.widths)
        encoder = DenseNet(widths, bias_enabled=False)
        encoder.weights = [blob[f"w{i}"].copy() for i in range(len(widths) - 1)]
        radius = state.get("radius_sq")
        run.model = SvddModel(
            encoder=encoder,
            center=blob["center"].copy(),
            objective=parsed.loop.objective,
            nu=parsed.loop.nu,
            radius_sq=radius,
        )
        run.all_scores = blob["all_scores"].copy()
        run.label_state.unlabeled = blob["unlabeled"].copy()
        run.label_state.normals = blob["normals"].copy()
        run.label_state.abnormals = blob["abnormals"].copy()
        run.label_state.check()
        run.stage = int(state["stage"])
        run.ab_state.q_history = list(state["q_history"])
        run.ab_state.r_history = list(state["r_history"])
        run.records = [StageRecord.from_dict(doc) for doc in state["records"]]
        run.pretrain_trace = list(state.get("pretrain_trace", []))
        run.rng.bit_generator.state = state["rng_state"]
        if state["has_pending"]:
            run._pending = blob["pending"].copy()
            run._pending_threshold = state.get("pending_threshold")
        session = Session(sid, state["config"], run, dataset)
        session.received = {int(k): int(v) for k, v in state["received"].items()}
        session.status = state["status"]
        session.error = state.get("error")
        session.refresh_status()
        return session


def _session_info(session: Session) -> dict:
    run = session.run
    return {
        "api_version": API_VERSION,
        "session_id": session.id,
        "status": session.status,
        "stage": run.stage,
        "stages_total": run.config.stages,
        "budget": run.budget,
        "labels_received": len(session.received),
        "ready_to_advance": session.status == "READY",
        "n": run.n,
        "d": run.d,
        "dataset": session.dataset.name,
        "objective": run.config.objective,
        "strategy": run.config.strategy,
        "ssl": run.config.ssl_method,
        "seed": run.config.seed,
        "error": session.error,
    }


def _query_payload(session: Session) -> dict:
    run = session.run
    if session.status == "BUSY":
        return {
            "status": "BUSY",
            "stage": run.stage,
            "pending": [],
            "completed": [],
            "background": [],
            "ready_to_advance": False,
            "q": None,
            "threshold": None,
        }
    pending = run.pending
    payload: dict = {
        "status": session.status,
        "stage": run.stage,
        "q": run.ab_state.q_current,
        "threshold": run.pending_threshold,
        "ready_to_advance": session.status == "READY",
        "pending": [],
        "completed": [],
        "background": [],
    }
    proj = embedding_projection(run.model, run.features)
    raw = session.dataset.features
    names = session.dataset.feature_names
    labeled: dict[int, int] = {int(i): 0 for i in run.label_state.normals}
    labeled.update({int(i): 1 for i in run.label_state.abnormals})
    pending_set = set() if pending is None else {int(i) for i in pending}
    if pending is not None:
        threshold = run.pending_threshold
        for i in pending:
            i = int(i)
            s = float(run.all_scores[i])
            card = {
                "index": i,
                "score": s,
                "boundary_distance": None
                if threshold is None
                else abs(s - float(threshold)),
                "features": {k: float(v) for k, v in zip(names, raw[i])},
                "projection": [float(proj[i, 0]), float(proj[i, 1])],
            }
            if i in session.received:
                card["label"] = session.received[i]
                payload["completed"].append(card)
            else:
                payload["pending"].append(card)
    for i in range(run.n):
        payload["background"].append(
            {
                "index": i,
                "projection": [float(proj[i, 0]), float(proj[i, 1])],
                "score": float(run.all_scores[i]),
                "label": labeled.get(i),
                "queried": i in pending_set,
            }
        )
    return payload


def _metrics_payload(session: Session) -> dict:
    run = session.run
    records = run.records
    return {
        "api_version": API_VERSION,
        "session_id": session.id,
        "status": session.status,
        "stage": run.stage,
        "stages_total": run.config.stages,
        "budget": run.budget,
        "auc": [rec.auc for rec in records],
        "r": [rec.r for rec in records[1:]],
        "q": [rec.q_used for rec in records[1:]],
        "q_next": [rec.q_next for rec in records[1:]],
        "n_labeled_normal": [rec.n_labeled_normal for rec in records[1:]],
        "n_labeled_abnormal": [rec.n_labeled_abnormal for rec in records[1:]],
        "loss": [rec.loss_summary() for rec in records],
        "pretrain_loss": list(run.pretrain_trace),
    }


def build_app(default_config=None, state_dir="sessions", ui_dir=None) -> FastAPI:
    """Assemble the API; default_config is a ParsedConfig used for empty bodies."""
    from .cli import ConfigError, parse_config, realize_dataset
    from .loop import resolve_budget

    app = FastAPI(title="activesvdd labeling service", version=str(API_VERSION))
    store = SessionStore(state_dir)
    app.state.store = store

    def _busy_guard(session: Session) -> None:
        if session.status == "BUSY":
            raise HTTPException(status_code=409, detail="session is retraining")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "api_version": API_VERSION}

    @app.get("/api/sessions")
    def list_sessions():
        return {"sessions": store.ids()}

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict | None = None):
        if body:
            try:
                parsed = parse_config(body)
            except ConfigError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
        elif default_config is not None:
            parsed = default_config
        else:
            raise HTTPException(
                status_code=400, detail="no config supplied and no server default"
            )
        try:
            dataset = realize_dataset(parsed)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        budget = resolve_budget(dataset.n, parsed.loop)
        if budget > dataset.n:
            raise HTTPException(
                status_code=400,
                detail=f"dataset of {dataset.n} rows cannot supply a batch of {budget}",
            )
        from .cli import _config_echo

        run = ActiveRun(parsed.loop, standardize(dataset).features)
        run.initialize()
        run.records[0].auc = auc(run.all_scores, dataset.labels)
        run.start_stage()
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, _config_echo(parsed), run, dataset)
        store.add(session)
        store.persist(session)
        info = _session_info(session)
        info["query"] = _query_payload(session)
        return info

    @app.get("/api/sessions/{sid}")
    def get_session(sid: str):
        session = store.get(sid)
        with session.lock:
            return _session_info(session)

    @app.get("/api/sessions/{sid}/query")
    def get_query(sid: str):
        session = store.get(sid)
        with session.lock:
            return _query_payload(session)

    @app.post("/api/sessions/{sid}/labels")
    def post_label(sid: str, body: dict):
        session = store.get(sid)
        with session.lock:
            _busy_guard(session)
            if session.status == "DONE":
                raise HTTPException(status_code=409, detail="session is complete")
            pending = session.run.pending
            if pending is None:
                raise HTTPException(status_code=409, detail="no pending query batch")
            if "index" not in body or "label" not in body:
                raise HTTPException(
                    status_code=400, detail="body needs 'index' and 'label'"
                )
            try:
                index = int(body["index"])
            except (TypeError, ValueError):
                raise HTTPException(status_code=400, detail="index must be an integer") from None
            raw_label = body["label"]
            if isinstance(raw_label, str):
                raw_label = raw_label.strip().lower()
            if raw_label not in _LABEL_VALUES:
                raise HTTPException(
                    status_code=400,
                    detail="label must be 'normal', 'abnormal', 0, or 1",
                )
            if index not in {int(i) for i in pending}:
                raise HTTPException(
                    status_code=400,
                    detail=f"index {index} is not part of the pending batch",
                )
            session.received[index] = _LABEL_VALUES[raw_label]
            session.refresh_status()
            store.persist(session)
            return {
                "recorded": True,
                "index": index,
                "label": session.received[index],
                "labels_received": len(session.received),
                "ready_to_advance": session.status == "READY",
            }

    def _advance_worker(session: Session):
        run = session.run
        try:
            record = run.complete_stage(session.received)
            record.auc = auc(run.all_scores, session.dataset.labels)
            with session.lock:
                session.received = {}
                if run.done:
                    session.status = "DONE"
                else:
                    run.start_stage()
                    session.status = "QUERY_PENDING"
                store.persist(session)
        except Exception as exc:  # noqa: BLE001 - surfaced via session status
            with session.lock:
                session.status = "ERROR"
                session.error = str(exc)
                store.persist(session)

    @app.post("/api/sessions/{sid}/advance")
    def advance(sid: str, wait: bool = False):
        session = store.get(sid)
        with session.lock:
            _busy_guard(session)
            if session.status == "DONE":
                raise HTTPException(status_code=409, detail="session is complete")
            if session.status != "READY":
                missing = (
                    len(session.run.pending) - len(session.received)
                    if session.run.pending is not None
                    else 0
                )
                raise HTTPException(
                    status_code=409,
                    detail=f"cannot advance: {missing} sample(s) still unlabeled",
                )
            session.status = "BUSY"
            worker = threading.Thread(
                target=_advance_worker, args=(session,), daemon=True
            )
            session.worker = worker
            worker.start()
        if wait:
            worker.join()
            with session.lock:
                info = _session_info(session)
                records = session.run.records
                info["record"] = records[-1].to_dict() if records else None
                return info
        return {"status": "BUSY", "session_id": session.id, "wait": False}

    @app.get("/api/sessions/{sid}/metrics")
    def get_metrics(sid: str):
        session = store.get(sid)
        with session.lock:
            return _metrics_payload(session)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def root():
            return {
                "service": "activesvdd",
                "api_version": API_VERSION,
                "endpoints": [
                    "/healthz",
                    "/api/sessions",
                    "/api/sessions/{id}",
                    "/api/sessions/{id}/query",
                    "/api/sessions/{id}/labels",
                    "/api/sessions/{id}/advance",
                    "/api/sessions/{id}/metrics",
                ],
            }

    return app
