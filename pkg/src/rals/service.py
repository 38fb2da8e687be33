"""HTTP labeling service: a human oracle drives the active-learning loop.

Each session owns an independent ``ActiveLearningLoop`` in oracle mode. The
session state machine is awaiting-labels -> computing -> (awaiting-labels |
finished); labels are only accepted in awaiting-labels, submissions are
idempotent by client token, and query payloads are frozen at propose time so
repeated reads are identical. F rows cross the wire as decimal strings with
17 significant digits, enough to reconstruct the float64 bits exactly.
"""

from __future__ import annotations

import json
import os
import secrets
import tempfile
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict

from .data import FeatureMatrix, LabelPool, RalsConfig
from .driver import ActiveLearningLoop, draw_initial_labels

AWAITING = "awaiting-labels"
COMPUTING = "computing"
FINISHED = "finished"


class CreateSessionBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    batch_size: Optional[int] = None
    delta: Optional[float] = None
    budget: Optional[int] = None
    seed: Optional[int] = None
    initial_labels: Optional[int] = None
    gamma: Optional[float] = None
    alpha: Optional[float] = None
    embed_dim: Optional[int] = None
    embed_source: Optional[str] = None
    perplexity: Optional[float] = None
    tsne_iters: Optional[int] = None
    gate_oracle_labels: Optional[bool] = None
    async_compute: bool = False


class LabelItem(BaseModel):
    model_config = ConfigDict(extra="forbid")

    index: int
    label: Optional[int] = None  # None means abstain


class SubmitLabelsBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    token: str
    labels: list[LabelItem]


@dataclass
class Session:
    session_id: str
    loop: ActiveLearningLoop
    status: str
    async_compute: bool
    queries_payload: Optional[list[dict]] = None
    token_responses: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    error: Optional[str] = None


def _metric_dict(loop: ActiveLearningLoop) -> Optional[dict]:
    snap = loop.snapshots[-1]
    return snap.metrics.to_dict() if snap.metrics is not None else None


def _history_summary(loop: ActiveLearningLoop) -> list[dict]:
    out = []
    for s in loop.snapshots:
        out.append(
            {
                "iteration": s.iteration,
                "labeled_count": s.labeled_count,
                "accepted": s.accepted_count,
                "total_accuracy": s.metrics.total_accuracy if s.metrics else None,
                "average_accuracy": s.metrics.average_accuracy if s.metrics else None,
            }
        )
    return out


def _freeze_queries(loop: ActiveLearningLoop, features: FeatureMatrix) -> list[dict]:
    payload = []
    for q in loop.propose():
        row = features.values[q.sample_index]
        payload.append(
            {
                "index": q.sample_index,
                "features": [float(v) for v in row[:8]],
                "cluster": q.cluster_id,
                "skl_score": q.skl_score,
                "bvsb_ratio": q.bvsb_ratio,
                "best_class": q.best_class,
                "second_class": q.second_class,
                "f_row": [f"{v:.17g}" for v in q.f_row],
            }
        )
    return payload


def create_app(
    features: FeatureMatrix,
    pool_template: LabelPool,
    config: RalsConfig,
    initial_labels: int = 25,
    console_dir: Optional[str] = None,
    snapshot_dir: Optional[str] = None,
) -> FastAPI:
    """Build the service around one loaded dataset.

    ``pool_template`` carries ground truth used only to seed each session's
    initial labels; every queried label after that comes from the client.
    """
    app = FastAPI(title="rals labeling service")
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    def persist(session: Session) -> None:
        if snapshot_dir is None:
            return
        state = {
            "session_id": session.session_id,
            "status": session.status,
            "iteration": session.loop.m - 1,
            "labeled_count": len(session.loop.pool.labeled),
            "labeled_indices": list(session.loop.pool.labeled),
            "observed": {str(k): v for k, v in session.loop.pool.observed.items()},
            "provenance": dict(session.loop.pool.provenance),
            "config": session.loop.config.to_dict(),
        }
        target = Path(snapshot_dir) / f"{session.session_id}.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=str(target.parent), prefix=f".{target.name}.")
        with os.fdopen(fd, "w") as fh:
            json.dump(state, fh)
        os.replace(tmp, target)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def advance(session: Session) -> None:
        """After a commit: either freeze the next batch or finish."""
        if session.loop.can_continue():
            session.queries_payload = _freeze_queries(session.loop, features)
            session.status = AWAITING
        else:
            session.queries_payload = None
            session.status = FINISHED
        persist(session)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        overrides = {}
        for key, target in [
            ("batch_size", "batch_size"),
            ("delta", "delta"),
            ("budget", "label_budget"),
            ("seed", "seed"),
            ("gamma", "gamma"),
            ("alpha", "alpha"),
            ("embed_dim", "embed_dim"),
            ("embed_source", "embed_source"),
            ("perplexity", "perplexity"),
            ("tsne_iters", "tsne_iters"),
            ("gate_oracle_labels", "gate_oracle_labels"),
        ]:
            value = getattr(body, key)
            if value is not None:
                overrides[target] = value
        try:
            session_config = replace(config, label_mode="oracle", **overrides)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        initial = body.initial_labels if body.initial_labels is not None else initial_labels
        pool = pool_template.copy()
        try:
            draw_initial_labels(pool, initial, session_config.seed)
            n_unlabeled = pool.unlabeled_indices().size
            if session_config.batch_size > n_unlabeled:
                raise ValueError(
                    f"batch_size {session_config.batch_size} exceeds the "
                    f"{n_unlabeled} unlabeled samples"
                )
            loop = ActiveLearningLoop(features, pool, session_config, "rals")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        session = Session(
            session_id=secrets.token_hex(8),
            loop=loop,
            status=AWAITING,
            async_compute=body.async_compute,
        )
        advance(session)
        with sessions_lock:
            sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "status": session.status,
            "labeled_count": len(loop.pool.labeled),
            "budget": session_config.label_budget,
            "batch_size": session_config.batch_size,
            "pending_count": len(session.queries_payload or []),
            "n_classes": loop.pool.n_classes,
            "class_names": list(loop.pool.class_names) if loop.pool.class_names else None,
            "metrics": _metric_dict(loop),
        }

    @app.get("/sessions/{session_id}/queries")
    def get_queries(session_id: str):
        session = get_session(session_id)
        if session.status != AWAITING:
            raise HTTPException(
                status_code=409, detail=f"session is {session.status}, not {AWAITING}"
            )
        return {"session_id": session_id, "status": session.status, "queries": session.queries_payload}

    @app.post("/sessions/{session_id}/labels")
    def submit_labels(session_id: str, body: SubmitLabelsBody):
        session = get_session(session_id)
        with session.lock:
            if body.token in session.token_responses:
                return session.token_responses[body.token]
            if session.status != AWAITING:
                raise HTTPException(
                    status_code=409, detail=f"session is {session.status}, not {AWAITING}"
                )

            pending = {q["index"] for q in session.queries_payload or []}
            answers: dict[int, Optional[int]] = {}
            for item in body.labels:
                if item.index not in pending:
                    raise HTTPException(
                        status_code=400, detail=f"index {item.index} is not in the pending batch"
                    )
                if item.label is not None and not 0 <= item.label < session.loop.pool.n_classes:
                    raise HTTPException(
                        status_code=400,
                        detail=f"label {item.label} out of range [0, {session.loop.pool.n_classes})",
                    )
                answers[item.index] = item.label

            session.status = COMPUTING
            persist(session)

            def compute():
                try:
                    state = session.loop.commit(answers)
                    advance(session)
                    response = {
                        "session_id": session_id,
                        "status": session.status,
                        "iteration": state.iteration,
                        "labeled_count": state.labeled_count,
                        "accepted": state.accepted_count,
                        "rejected": len(state.batch.rejected_indices) if state.batch else 0,
                        "pending_count": len(session.queries_payload or []),
                        "metrics": _metric_dict(session.loop),
                    }
                except Exception as exc:  # surface loop errors to the client
                    session.status = FINISHED
                    session.error = str(exc)
                    response = {"session_id": session_id, "status": FINISHED, "error": session.error}
                session.token_responses[body.token] = response
                return response

            if session.async_compute:
                thread = threading.Thread(target=lambda: (compute(), None), daemon=True)
                thread.start()
                return {"session_id": session_id, "status": COMPUTING, "token": body.token}
            return compute()

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        session = get_session(session_id)
        return {
            "session_id": session_id,
            "status": session.status,
            "iteration": session.loop.m - 1,
            "labeled_count": len(session.loop.pool.labeled),
            "budget": session.loop.config.label_budget,
            "metrics": _metric_dict(session.loop),
            "history": _history_summary(session.loop),
            "error": session.error,
        }

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/app", StaticFiles(directory=console_dir, html=True), name="console")

    return app
