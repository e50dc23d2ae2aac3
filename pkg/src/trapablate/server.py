"""HTTP service exposing the campaign engine to operator consoles.

Single logical writer: commands serialize through a lock; readers snapshot
state or stream events.  Endpoints live under /api/v1:

    GET  /api/v1/state                     -> {"seq", "state"}
    POST /api/v1/command                   -> {"accepted", "seq", "reason"}
    GET  /api/v1/events?since=N[&limit=M]  -> server-sent event stream
    GET  /api/v1/fluence-map?power=P       -> CSV
    GET  /api/v1/compensation-profile      -> CSV
"""

from __future__ import annotations

import json
import queue
import threading

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from starlette.staticfiles import StaticFiles

from . import beamoptics, micromotion
from .campaign import CampaignEngine
from .scenario import canonical_json


class EventBroker:
    """Fan-out of committed events to streaming subscribers."""

    def __init__(self) -> None:
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, events: list[dict]) -> None:
        with self._lock:
            subs = list(self._subscribers)
        for q in subs:
            for e in events:
                q.put(e)


def create_app(engine: CampaignEngine, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="trapablate campaign service")
    write_lock = threading.Lock()
    broker = EventBroker()

    def scenario_summary() -> dict | None:
        scn = engine.scenario
        if scn is None:
            return None
        bbox = scn.chip.bounding_box()
        return {
            "chip_bbox": [list(bbox[0]), list(bbox[1])],
            "defect_center": list(scn.defect.center),
            "defect_footprint": list(scn.defect.footprint),
            "defect_height": scn.defect.height,
            "transport_span": list(scn.transport_span()),
            "power_range": [scn.calibration.anchors[0][0], scn.calibration.anchors[-1][0]],
        }

    @app.get("/api/v1/state")
    def get_state():
        with write_lock:
            return {
                "seq": engine.seq,
                "state": dict(engine.state),
                "scenario": scenario_summary(),
            }

    @app.post("/api/v1/command")
    async def post_command(request: Request):
        body = await request.json()
        with write_lock:
            accepted, events = engine.handle(body)
            seq = engine.seq
            reason = events[0]["payload"].get("reason") if events else None
        broker.publish(events)
        return {"accepted": accepted, "seq": seq, "reason": reason}

    @app.get("/api/v1/events")
    def get_events(since: int = Query(default=0), limit: int | None = Query(default=None)):
        def sse(event: dict) -> str:
            return f"id: {event['seq']}\ndata: {canonical_json(event)}\n\n"

        def stream():
            sent = 0
            q = broker.subscribe()
            try:
                with write_lock:
                    backlog = [e for e in engine.events if e["seq"] > since]
                    horizon = engine.seq
                for e in backlog:
                    yield sse(e)
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
                while True:
                    try:
                        e = q.get(timeout=1.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    if e["seq"] <= horizon:
                        continue  # already delivered from the backlog
                    yield sse(e)
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
            finally:
                broker.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/v1/fluence-map")
    def fluence_map(power: float = Query(...), grid: float = Query(default=10e-6)):
        scn = engine.scenario
        if scn is None:
            raise HTTPException(status_code=409, detail="no scenario loaded")
        try:
            fluence = beamoptics.percent_to_fluence(scn.calibration, power)
        except beamoptics.CalibrationRangeError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        energy = beamoptics.pulse_energy_for_fluence(fluence, scn.beam)
        beam = scn.beam_at(engine.state["align_dx"], engine.state["align_dz"])
        samples, _ = beamoptics.chip_exposure_profile(
            beam, energy, scn.chip.bounding_box(), grid_spacing=grid
        )
        return PlainTextResponse(beamoptics.exposure_csv(samples), media_type="text/csv")

    @app.get("/api/v1/compensation-profile")
    def compensation_csv():
        scn = engine.scenario
        if scn is None:
            raise HTTPException(status_code=409, detail="no scenario loaded")
        with write_lock:
            cleared = engine.state["defect_cleared"]
            wf = engine.waveform()
        src = scn.stray_source(cleared)
        profile = micromotion.compensation_profile(
            scn.chip, scn.ion, scn.rf, src, wf.positions,
            voltage_bound=scn.compensation_voltage_bound,
        )
        return PlainTextResponse(micromotion.profile_csv(profile), media_type="text/csv")

    # console bundle, when built (frontend/dist)
    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app


def serve(engine: CampaignEngine, port: int = 8000, host: str = "127.0.0.1",
          static_dir: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(engine, static_dir=static_dir), host=host, port=port, log_level="warning")
