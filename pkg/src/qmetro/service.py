"""HTTP service around AdaptiveSession.

Each session lives in memory behind a per-session lock and is mirrored
to an append-only JSONL file (one `created` line with the config, one
`outcome` line per round), so a restarted service rebuilds every session
by replaying its log.  Mutation goes through POST .../outcomes only; an
optional optimistic `round` field lets clients detect concurrent writers
(mismatch answers 409).  Reads never take the lock: round updates swap
in fresh posterior arrays, so a concurrent GET sees a consistent older
snapshot at worst.

Posterior payloads are downsampled to at most 512 points per axis; full
resolution is available through the CSV export, whose files are written
by the same code as the command-line artifacts.
"""

from __future__ import annotations

import asyncio
import io
import json
import logging
import os
import tempfile
import threading
import time
import uuid
import zipfile
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, HTTPException, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

from .config import config_hash, parse_config
from .errors import (
    ConfigError,
    DegeneracyError,
    DimensionError,
    DomainError,
    UnsupportedError,
)
from .tasks import build_session, write_session_artifacts

__all__ = ["create_app", "MAX_POSTERIOR_POINTS"]

MAX_POSTERIOR_POINTS = 512

log = logging.getLogger("qmetro.service")

_CONFIG_ERRORS = (ConfigError, DomainError, DimensionError, UnsupportedError)


def _downsample(values: np.ndarray) -> list:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size <= MAX_POSTERIOR_POINTS:
        return [float(v) for v in values]
    idx = np.round(np.linspace(0, values.size - 1, MAX_POSTERIOR_POINTS)).astype(int)
    return [float(v) for v in values[idx]]


class _SessionBox:
    """One live session plus its lock, log file, and event subscribers."""

    def __init__(self, sid: str, session, config_doc: dict, path: str):
        self.id = sid
        self.session = session
        self.config_doc = config_doc
        self.path = path
        self.lock = threading.Lock()
        self.subscribers: list = []
        self.created = time.time()
        self.updated = self.created

    def append_log(self, record: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def snapshot(self) -> dict:
        s = self.session
        axis = s.grid.axes[0]
        return {
            "id": self.id,
            "phase": s.phase,
            "round": s.round,
            "pre_rounds": s.pre_rounds,
            "x_opt": float(s.x_opt),
            "u": float(s.u),
            "estimate": float(s.estimate()),
            "n_outcomes": len(s.M),
            "axis": _downsample(axis),
            "posterior": _downsample(s.posterior),
            "downsampled": axis.size > MAX_POSTERIOR_POINTS,
            "history": [dict(row) for row in s.history],
            "created": self.created,
            "updated": self.updated,
        }

    def round_payload(self, y: int) -> dict:
        s = self.session
        last = s.history[-1]
        return {
            "id": self.id,
            "round": s.round,
            "phase": s.phase,
            "y": int(y),
            "x_hat": float(last["x_hat"]),
            "u_next": float(s.u),
            "posterior": _downsample(s.posterior),
        }


def _resume(path: str):
    """Rebuild one session from its JSONL log; the session is a pure state
    machine, so replaying the outcome lines reproduces it exactly."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("event") != "created":
        raise ValueError("log does not start with a created event")
    head = lines[0]
    cfg = parse_config(head["config"], sha256=config_hash(head["config"]))
    session = build_session(cfg)
    for rec in lines[1:]:
        if rec.get("event") != "outcome":
            continue
        y = int(rec["y"])
        if session.phase == "pre-estimation":
            session.pre_estimate([y])
        else:
            session.submit_outcome(y)
    box = _SessionBox(head["id"], session, head["config"], path)
    box.created = float(head.get("created", box.created))
    box.updated = box.created
    return box


def create_app(data_dir: str, static_dir=None) -> FastAPI:
    @asynccontextmanager
    async def _lifespan(app: FastAPI):
        # the event loop is needed to push WS events from worker threads
        app.state.loop = asyncio.get_running_loop()
        yield

    app = FastAPI(title="qmetro adaptive service", lifespan=_lifespan)
    os.makedirs(data_dir, exist_ok=True)

    boxes: dict = {}
    app.state.sessions = boxes
    app.state.loop = None

    for name in sorted(os.listdir(data_dir)):
        if not name.endswith(".jsonl"):
            continue
        path = os.path.join(data_dir, name)
        try:
            box = _resume(path)
        except Exception as exc:
            log.warning("skipping session log %s: %s", path, exc)
            continue
        boxes[box.id] = box

    def _get_box(sid: str) -> _SessionBox:
        box = boxes.get(sid)
        if box is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return box

    def _publish(box: _SessionBox, payload: dict) -> None:
        loop = app.state.loop
        if loop is None:
            return
        for q in list(box.subscribers):
            loop.call_soon_threadsafe(q.put_nowait, payload)

    @app.post("/sessions", status_code=201)
    def create_session(doc: dict, request: Request):
        try:
            cfg = parse_config(doc, sha256=config_hash(doc))
            if cfg.task != "adapt":
                raise ConfigError(
                    f"task.name: the service runs adapt sessions, got {cfg.task!r}"
                )
            session = build_session(cfg)
        except _CONFIG_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except DegeneracyError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

        sid = uuid.uuid4().hex
        box = _SessionBox(sid, session, doc, os.path.join(data_dir, f"{sid}.jsonl"))
        box.append_log({
            "event": "created", "id": sid, "config": doc, "created": box.created,
        })
        boxes[sid] = box
        prior = cfg.options.get("prior", {})
        return {
            "id": sid,
            "x_opt": float(session.x_opt),
            "u0": float(session.u),
            "round": session.round,
            "phase": session.phase,
            "pre_rounds": session.pre_rounds,
            "n_outcomes": len(session.M),
            "prior": {
                "type": prior.get("type"),
                "range": list(prior.get("range", ())),
                "points": prior.get("points"),
            },
        }

    @app.post("/sessions/{sid}/outcomes")
    def post_outcome(sid: str, body: dict):
        box = _get_box(sid)
        if "y" not in body:
            raise HTTPException(status_code=422, detail="body needs an outcome index y")
        try:
            y = int(body["y"])
        except (TypeError, ValueError):
            raise HTTPException(status_code=422, detail="y must be an integer") from None
        n = len(box.session.M)
        if not 0 <= y < n:
            raise HTTPException(
                status_code=422,
                detail=f"y must lie in 0..{n - 1} (the measurement has {n} outcomes)",
            )
        with box.lock:
            if "round" in body and body["round"] is not None:
                if int(body["round"]) != box.session.round:
                    raise HTTPException(
                        status_code=409,
                        detail=(
                            f"round {body['round']} does not match the current "
                            f"round {box.session.round}"
                        ),
                    )
            try:
                if box.session.phase == "pre-estimation":
                    box.session.pre_estimate([y])
                else:
                    box.session.submit_outcome(y)
            except DegeneracyError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            box.append_log({"event": "outcome", "y": y})
            box.updated = time.time()
            payload = box.round_payload(y)
        _publish(box, payload)
        return payload

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _get_box(sid).snapshot()

    @app.get("/sessions/{sid}/export")
    def export_session(sid: str):
        box = _get_box(sid)
        buf = io.BytesIO()
        with tempfile.TemporaryDirectory() as td:
            files = write_session_artifacts(box.session, td)
            with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
                for name in files:
                    zf.write(os.path.join(td, name), arcname=name)
        return Response(
            buf.getvalue(),
            media_type="application/zip",
            headers={
                "Content-Disposition": f'attachment; filename="session-{sid}.zip"'
            },
        )

    @app.websocket("/sessions/{sid}/events")
    async def session_events(ws: WebSocket, sid: str):
        box = boxes.get(sid)
        if box is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        box.subscribers.append(queue)
        try:
            while True:
                payload = await queue.get()
                await ws.send_json(payload)
        except WebSocketDisconnect:
            pass
        finally:
            box.subscribers.remove(queue)

    @app.exception_handler(Exception)
    async def _unhandled(request: Request, exc: Exception):
        log.exception("unhandled error on %s", request.url.path)
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
