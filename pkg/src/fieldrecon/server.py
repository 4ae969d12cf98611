"""HTTP service for the reconnaissance game.

Sessions are owned by a GameHost; every mutating request appends to an
append-only JSONL file so a restarted server can rebuild state by replay.
The protocol never exposes field values away from mapped curves, critical
points, or any ground-truth metric while a session is active: clients get
polylines, the clock, and data-partition statistics only.
"""

from __future__ import annotations

import json
import os
import time

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import game, topology


class ClickBody(BaseModel):
    x: float
    y: float
    nonce: str | None = None


def create_app(archive, log_dir=None, clock=time.monotonic, duration=game.SESSION_SECONDS, cors=None):
    host = game.GameHost(archive, clock=clock, duration=duration)
    app = FastAPI(title="fieldrecon game server")
    if cors:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=cors,
            allow_methods=["*"],
            allow_headers=["*"],
        )
    app.state.host = host
    nonces = {}

    def persist(session):
        if log_dir is None:
            return
        os.makedirs(log_dir, exist_ok=True)
        path = os.path.join(log_dir, f"session_{session.sid}.json")
        with open(path, "w") as fh:
            json.dump(host.session_log(session), fh)

    def get_session(sid):
        session = host.sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "sessions": len(host.sessions)}

    @app.post("/sessions", status_code=201)
    def start_session(body: dict):
        player = body.get("player")
        if not player or not isinstance(player, str):
            raise HTTPException(status_code=400, detail="player required")
        try:
            session = host.start_session(player)
        except Exception as err:  # archive failure
            raise HTTPException(status_code=503, detail=str(err))
        persist(session)
        return {
            "session": session.sid,
            "field": host.archive.meta(session.area.field_id),
            "remaining": session.remaining(host.clock()),
        }

    @app.post("/sessions/{sid}/clicks")
    def click(sid: str, body: ClickBody):
        session = get_session(sid)
        if body.nonce is not None:
            cached = nonces.get((sid, body.nonce))
            if cached is not None:
                return cached
        result = host.handle_click(session, body.x, body.y)
        persist(session)
        if not result["accepted"]:
            if result.get("reason") == "expired":
                raise HTTPException(status_code=409, detail="session expired")
            response = {
                "accepted": False,
                "reason": result.get("reason", "rejected"),
                "remaining": session.remaining(host.clock()),
            }
        else:
            response = {
                "accepted": True,
                "polyline": result["polyline"],
                "metrics": result["metrics"],
                "remaining": session.remaining(host.clock()),
            }
        if body.nonce is not None:
            nonces[(sid, body.nonce)] = response
        return response

    @app.post("/sessions/{sid}/next-area")
    def next_area(sid: str):
        session = get_session(sid)
        area = host.next_area(session)
        if area is None:
            raise HTTPException(status_code=409, detail="session expired")
        persist(session)
        return {
            "field": host.archive.meta(area.field_id),
            "remaining": session.remaining(host.clock()),
        }

    @app.get("/sessions/{sid}/log")
    def get_log(sid: str):
        session = get_session(sid)
        return host.session_log(session)

    @app.get("/sessions/{sid}/reveal")
    def reveal(sid: str):
        session = get_session(sid)
        host._expire_check(session, host.clock())
        if session.status != "finished":
            raise HTTPException(status_code=403, detail="session still active")
        overlays = []
        for fid in session.field_ids:
            gt = host.archive.ground_truth(fid)
            overlay = topology.structure_to_json(gt)
            overlay["field_id"] = fid
            overlays.append(overlay)
        return {"areas": overlays}

    return app


def restore_sessions(app, log_dir):
    """Rebuild host sessions from persisted logs (server restart)."""
    host = app.state.host
    if not log_dir or not os.path.isdir(log_dir):
        return 0
    count = 0
    for name in sorted(os.listdir(log_dir)):
        if not name.startswith("session_") or not name.endswith(".json"):
            continue
        with open(os.path.join(log_dir, name)) as fh:
            log_dict = json.load(fh)
        sid = name[len("session_") : -len(".json")]
        areas = game.replay_session_log(log_dict, host.archive)
        session = game.GameSession(
            sid=sid,
            player=log_dict["player"],
            started=log_dict["started"],
            duration=log_dict["duration"],
            area=areas[-1] if areas else host._fresh_area(log_dict["field_ids"][0]),
            field_ids=list(log_dict["field_ids"]),
            events=list(log_dict["events"]),
            status="finished",
        )
        host.sessions[sid] = session
        count += 1
    return count
