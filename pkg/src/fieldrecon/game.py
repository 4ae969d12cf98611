"""The human reconnaissance game: sessions, click semantics, field archive,
synthetic players, and log replay.

Click semantics: a click on empty space maps the gradient path through it;
a click on (within tolerance of) a mapped gradient path maps the isoline
through the nearest path point; clicks on mapped isolines are rejected.
Sessions run free play: the data partition updates for every mapped curve
and protocol violations are logged, never raised. One 12-minute clock
spans all areas of a session.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import time
from dataclasses import dataclass, field as dfield

import numpy as np

from . import entropy
from . import field as fieldmod
from . import partition as pt
from . import topology, trace

log = logging.getLogger(__name__)

SESSION_SECONDS = 720.0
COMPLEXITY_BY_PARITY = {0: 0.25, 1: 0.5}  # even ids rough, odd ids smooth


def field_params(field_id, n, base_seed):
    return {
        "id": field_id,
        "n": n,
        "d": COMPLEXITY_BY_PARITY[field_id % 2],
        "seed": base_seed + field_id,
    }


class FieldArchive:
    """Numbered archive of accepted (non-degenerate) windowed fields.

    Fields are defined procedurally by (n, base seed) and the even/odd
    complexity rule; ``materialize`` writes them to disk for the server.
    Acceptance re-seeds by a large offset, so a field id always denotes
    the same grid everywhere.
    """

    def __init__(self, n=128, base_seed=9000, count=64, directory=None):
        self.n = n
        self.base_seed = base_seed
        self.count = count
        self.directory = directory
        self._fields = {}
        self._gts = {}

    def meta(self, field_id):
        params = field_params(field_id, self.n, self.base_seed)
        return {"id": field_id, "n": self.n, "d": params["d"]}

    def field(self, field_id):
        if field_id not in self._fields:
            if self.directory is not None:
                path = os.path.join(self.directory, f"field_{field_id:04d}.bin")
                if os.path.exists(path):
                    self._fields[field_id] = fieldmod.load_field(path)
                    return self._fields[field_id]
            self._fields[field_id] = self._generate(field_id)
        return self._fields[field_id]

    def ground_truth(self, field_id):
        if field_id not in self._gts:
            self._gts[field_id] = topology.topology_partition(self.field(field_id))
        return self._gts[field_id]

    def _generate(self, field_id):
        params = field_params(field_id, self.n, self.base_seed)
        seed = params["seed"]
        while True:
            f = fieldmod.make_field(self.n, params["d"], seed)
            try:
                self._gts[field_id] = topology.topology_partition(f)
                return f
            except (topology.NonMorseFieldError, topology.DegenerateFieldError):
                seed += 10**6

    def materialize(self, directory, ids):
        os.makedirs(directory, exist_ok=True)
        for fid in ids:
            fieldmod.save_field(self.field(fid), os.path.join(directory, f"field_{fid:04d}.bin"))
        with open(os.path.join(directory, "archive.json"), "w") as fh:
            json.dump({"n": self.n, "base_seed": self.base_seed, "count": self.count}, fh)
        self.directory = directory

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "archive.json")) as fh:
            meta = json.load(fh)
        return cls(
            n=meta["n"],
            base_seed=meta["base_seed"],
            count=meta.get("count", 64),
            directory=directory,
        )


@dataclass
class AreaState:
    field_id: int
    partition: object
    isolines: list = dfield(default_factory=list)
    gradients: list = dfield(default_factory=list)
    polylines: list = dfield(default_factory=list)  # display order


@dataclass
class GameSession:
    sid: str
    player: str
    started: float
    duration: float
    area: AreaState
    field_ids: list = dfield(default_factory=list)
    events: list = dfield(default_factory=list)
    status: str = "active"

    def remaining(self, now):
        return max(self.duration - (now - self.started), 0.0)


class GameHost:
    """Owns the archive, the per-player field sequence, and live sessions."""

    def __init__(self, archive, clock=time.monotonic, duration=SESSION_SECONDS):
        self.archive = archive
        self.clock = clock
        self.duration = duration
        self.sessions = {}
        self._next_field = {}  # player -> next unplayed archive id
        self.hit_tol_cells = trace.DEFAULT_CONFIG.click_tol_cells

    def _fresh_area(self, field_id):
        f = self.archive.field(field_id)
        return AreaState(field_id=field_id, partition=pt.init_partition(f.n))

    def start_session(self, player):
        field_id = self._next_field.get(player, 0)
        self._next_field[player] = field_id + 1
        session = GameSession(
            sid=secrets.token_hex(16),
            player=player,
            started=self.clock(),
            duration=self.duration,
            area=self._fresh_area(field_id),
            field_ids=[field_id],
        )
        self.sessions[session.sid] = session
        return session

    def _expire_check(self, session, now):
        if session.status == "active" and now - session.started >= session.duration:
            session.status = "finished"
        return session.status

    def handle_click(self, session, x, y, now=None):
        """Resolve one click; returns a result dict and appends to the log."""
        now = self.clock() if now is None else now
        if self._expire_check(session, now) != "active":
            event = self._event(session, now, x, y, "rejected-expired", None)
            return {"accepted": False, "reason": "expired", "event": event}
        area = session.area
        f = self.archive.field(area.field_id)
        tol = self.hit_tol_cells * f.spacing
        hit = trace.locate_click(area.polylines, (x, y), tol)
        if hit is not None and area.polylines[hit[0]].kind == "gradient":
            origin = hit[1]
            try:
                iso = trace.trace_isoline(f, origin)
            except trace.TracingError as err:
                event = self._event(session, now, x, y, "rejected-isoline", None)
                return {"accepted": False, "reason": str(err), "event": event}
            area.partition = pt.insert_isoline(area.partition, iso, protocol=False)
            area.isolines.append(iso)
            area.polylines.append(iso)
            event = self._event(session, now, x, y, "isoline", len(area.polylines) - 1)
            return self._accept(session, iso, event)
        # within tolerance of an isoline only: a no-op click
        iso_hit = self._near_isoline(area, (x, y), tol)
        if iso_hit:
            event = self._event(session, now, x, y, "rejected-isoline", None)
            return {"accepted": False, "reason": "click on a mapped isoline", "event": event}
        try:
            grad = trace.trace_gradient(f, (x, y))
        except trace.TracingError as err:
            event = self._event(session, now, x, y, "rejected-isoline", None)
            return {"accepted": False, "reason": str(err), "event": event}
        cps = trace.critical_points_of(f)
        for end in grad.endpoints:
            if end["kind"] == "extremum":
                area.partition = pt.insert_extremum(area.partition, cps[end["cp"]])
        area.gradients.append(grad)
        area.polylines.append(grad)
        event = self._event(session, now, x, y, "gradient", len(area.polylines) - 1)
        return self._accept(session, grad, event)

    def _near_isoline(self, area, p, tol):
        for poly in area.polylines:
            if poly.kind != "isoline":
                continue
            d = np.hypot(poly.points[:, 0] - p[0], poly.points[:, 1] - p[1]).min()
            if d <= tol:
                return True
        return False

    def _accept(self, session, poly, event):
        return {
            "accepted": True,
            "polyline": poly.to_json(),
            "metrics": self.metrics(session),
            "event": event,
        }

    def metrics(self, session):
        """Player-visible metrics only (never ground-truth quantities)."""
        part = session.area.partition
        h_data = entropy.partition_entropy([c.area_px for c in part.cells])
        return {
            "h_data": h_data,
            "cells": part.n_cells,
            "uniformity_gap": float(np.log2(part.n_cells)) - h_data,
        }

    def next_area(self, session, now=None):
        now = self.clock() if now is None else now
        if self._expire_check(session, now) != "active":
            return None
        next_id = self._next_field.get(session.player, 0)
        self._next_field[session.player] = next_id + 1
        self._event(session, now, 0.0, 0.0, "next-area", None)
        session.area = self._fresh_area(next_id)
        session.field_ids.append(next_id)
        return session.area

    def _event(self, session, now, x, y, action, polyline_id):
        event = {
            "t": round(now - session.started, 3),
            "x": x,
            "y": y,
            "action": action,
            "polyline_id": polyline_id,
            "field_id": session.area.field_id,
            "area": len(session.field_ids) - 1,
        }
        session.events.append(event)
        return event

    def session_log(self, session):
        return {
            "player": session.player,
            "started": session.started,
            "duration": session.duration,
            "field_ids": list(session.field_ids),
            "archive": {"n": self.archive.n, "base_seed": self.archive.base_seed},
            "events": list(session.events),
        }


def save_session_log(log_dict, path):
    with open(path, "w") as fh:
        json.dump(log_dict, fh)


def load_session_log(path):
    with open(path) as fh:
        return json.load(fh)


def replay_session_log(log_dict, archive, observer=None):
    """Re-execute a session log area by area.

    ``observer(event, area_state, field, gt)`` runs before each mapping
    event is applied, seeing the exact pre-click state (that is what both
    the preference estimator and the metric curves need). Returns the
    final AreaState per area. Raises on logs whose events cannot be
    reproduced (tampered or mismatched archives).
    """
    areas = []
    area = None
    for event in log_dict["events"]:
        if area is None or event["area"] != len(areas) - 1:
            if event["area"] != len(areas):
                raise ValueError("event order broken: area index skipped")
            fid = log_dict["field_ids"][event["area"]]
            f = archive.field(fid)
            gt = archive.ground_truth(fid)
            area = AreaState(field_id=fid, partition=pt.init_partition(f.n))
            areas.append(area)
        action = event["action"]
        if action in ("next-area", "rejected-expired", "rejected-isoline"):
            continue
        f = archive.field(area.field_id)
        gt = archive.ground_truth(area.field_id)
        if observer is not None:
            observer(event, area, f, gt)
        p = (event["x"], event["y"])
        if action == "gradient":
            grad = trace.trace_gradient(f, p)
            cps = trace.critical_points_of(f)
            for end in grad.endpoints:
                if end["kind"] == "extremum":
                    area.partition = pt.insert_extremum(area.partition, cps[end["cp"]])
            area.gradients.append(grad)
            area.polylines.append(grad)
        elif action == "isoline":
            iso = trace.trace_isoline(f, p)
            area.partition = pt.insert_isoline(area.partition, iso, protocol=False)
            area.isolines.append(iso)
            area.polylines.append(iso)
        else:
            raise ValueError(f"unknown action {action!r}")
    return areas


def true_chi(cell, gt, labels):
    """Euler characteristic a cell would have if every extremum were known."""
    inside = 0
    for cp in gt.critical_points:
        if cp.is_extremum and labels[cp.row, cp.col] == cell.id:
            inside += 1
    return cell.chi - inside


def oracle_vo(part, gt):
    """The V^o region: cells whose chi <= -1 once all true extrema count.

    Returns (pixel count of V^o, set of cell ids). Normalization is the
    full grid size.
    """
    ids = set()
    pixels = 0
    for cell in part.cells:
        if true_chi(cell, gt, part.labels) <= -1:
            ids.add(cell.id)
            pixels += cell.area_px
    return pixels, ids


def synthetic_player(kind, archive, player, fields, clicks_per_field, seed=0, beta=None):
    """Generate a synthetic SessionLog.

    kinds: "uniform-random" (isoline origins uniform over the domain, the
    paper's control population), "beta" (region choice by the click
    preference model with exponent ``beta``), "topology-guided" (the
    machine policy, equivalent to beta = 0 in region choice).
    """
    rng = np.random.default_rng(seed)
    events = []
    tick = 0.0
    dt = SESSION_SECONDS / max(sum(clicks_per_field), 1) * 0.9
    for area_idx, (fid, n_clicks) in enumerate(zip(fields, clicks_per_field)):
        f = archive.field(fid)
        gt = archive.ground_truth(fid)
        n = f.n

        def emit(x, y, action):
            nonlocal tick
            events.append(
                {
                    "t": round(tick, 3),
                    "x": float(x),
                    "y": float(y),
                    "action": action,
                    "polyline_id": None,
                    "field_id": fid,
                    "area": area_idx,
                }
            )
            tick += dt

        if kind == "topology-guided":
            from . import strategy

            cfg = strategy.StrategyConfig(kind="topo", t=0.5, budget=n_clicks, seed=seed + fid)
            run = strategy.run_topology_guided(f, cfg)
            for prog in run.programs:
                emit(prog["x"], prog["y"], prog["kind"])
            continue

        part = pt.init_partition(n)
        done = 0
        while done < n_clicks:
            if kind == "uniform-random":
                # uniform over all grid pixels, matching the mu(X) = N^2
                # normalization of the preference model exactly
                i = int(rng.integers(0, n))
                j = int(rng.integers(0, n))
                point = (j / (n - 1), i / (n - 1))
            elif kind == "beta":
                vo_px, vo_ids = oracle_vo(part, gt)
                rho = vo_px / (n * n)
                pick_vo = rho > 0 and rng.random() < rho**beta
                labels = part.labels
                flat = labels.ravel()
                if pick_vo:
                    pool = np.flatnonzero(np.isin(flat, list(vo_ids)))
                else:
                    good = (flat > 0) & ~np.isin(flat, list(vo_ids))
                    pool = np.flatnonzero(good)
                if pool.size == 0:
                    pool = np.flatnonzero(flat > 0)
                pix = int(pool[rng.integers(pool.size)])
                i, j = divmod(pix, n)
                point = (j / (n - 1), i / (n - 1))
            else:
                raise ValueError(f"unknown synthetic player kind {kind!r}")
            try:
                iso = trace.trace_isoline(f, point)
            except trace.TracingError:
                continue
            part = pt.insert_isoline(part, iso, protocol=False)
            emit(point[0], point[1], "isoline")
            done += 1
    return {
        "player": player,
        "started": 0.0,
        "duration": SESSION_SECONDS,
        "field_ids": list(fields),
        "archive": {"n": archive.n, "base_seed": archive.base_seed},
        "events": events,
    }
