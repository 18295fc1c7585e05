"""HTTP session service: the rollout environment behind a JSON API.

Endpoints (machine-readable error codes on every 4xx):
  POST /sessions                        create from a cohort patient or a
                                        freshly sampled synthetic admission
  GET  /sessions/{id}/state             timelines, badges, status
  POST /sessions/{id}/simulate          read-only candidate predictions (<=3)
  POST /sessions/{id}/prescribe         commit an action, advance 4 hours
  GET  /sessions/{id}/trace             full transcript
  GET  /healthz                         liveness

Mutating endpoints are idempotent per client-supplied request_id. Sessions
expire after an idle TTL.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .adapter import render_candidates, render_state, validate_simulation_args
from .agent import (EnvConfig, Session, env_reset, env_step, finish_trace,
                    simulate_candidates)
from .cohort import Action, Cohort, LEVEL_NAMES, impute
from .errors import BudgetError, SessionStateError
from .features import IDX, NAMES
from .synth import sample_admission
from .worldmodel.params import WorldModelParams

DEFAULT_TTL_SECONDS = 30 * 60


@dataclass
class ApiSession:
    session: Session
    owner: str
    created_at: float
    last_access: float
    request_cache: dict = field(default_factory=dict)
    http_log: list = field(default_factory=list)


class CreateSession(BaseModel):
    source: str = Field(pattern="^(synthetic|cohort)$")
    patient_id: str | None = None
    seed: int = 0
    owner: str = "anonymous"
    max_steps: int = 20
    request_id: str | None = None


class SimulateBody(BaseModel):
    actions: list[str] = Field(min_length=1)
    request_id: str | None = None


class PrescribeBody(BaseModel):
    vasopressor: int
    iv_fluid: int
    request_id: str | None = None


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def _timeline(session: Session) -> dict:
    values = [s.values for s in session.steps] + [session.current_values]
    hours = [s.hour for s in session.steps] + [session.hour]
    return {
        "hours": hours,
        "features": {name: [float(v[IDX[name]]) for v in values] for name in NAMES},
    }


def _state_payload(session: Session) -> dict:
    from .safety import hypoperfusion
    return {
        "session_id": session.session_id,
        "status": session.status,
        "hour": session.hour,
        "step_count": session.step_count,
        "in_shock": bool(session.in_shock()),
        "hypoperfusion": bool(hypoperfusion(session.current_values)),
        "current_vaso_level": session.current_vaso_level,
        "cumulative_tev_ml": float(session.cum_tev),
        "static": {
            "age": session.static.age, "gender": session.static.gender,
            "weight": session.static.weight,
            "readmission": session.static.readmission,
            "comorbidity_index": session.static.comorbidity_index,
        },
        "actions": [[s.action.vaso_bin, s.action.fluid_bin] for s in session.steps],
        "verdicts": [{"adherent": v.adherent, "rules": list(v.violated_rules),
                      "unsafe": v.unsafe} for v in session.verdicts],
        "timeline": _timeline(session),
        "rendered": render_state(session),
    }


def _candidate_payload(session: Session, cands) -> dict:
    cur = session.current_values
    out = []
    for c in cands:
        v = c.predicted.denormalized_mean
        out.append({
            "action": [c.action.vaso_bin, c.action.fluid_bin],
            "levels": {"vasopressor": LEVEL_NAMES[c.action.vaso_bin],
                       "iv_fluid": LEVEL_NAMES[c.action.fluid_bin]},
            "predicted": {
                "meanbp": float(v[IDX["meanbp"]]),
                "lactate": float(v[IDX["lactate"]]),
                "soft_sofa": float(c.predicted.soft_sofa),
                "vent_prob": float(c.predicted.vent_prob),
            },
            "deltas": {
                "meanbp": float(v[IDX["meanbp"]] - cur[IDX["meanbp"]]),
                "lactate": float(v[IDX["lactate"]] - cur[IDX["lactate"]]),
                "soft_sofa": float(c.predicted.soft_sofa - cur[IDX["sofa"]]),
            },
            "p_mortality": float(c.predicted_outcome.p_mortality),
        })
    return {"candidates": out, "rendered": render_candidates(cands)}


def create_app(world: WorldModelParams, cohort: Cohort | None = None,
               ttl_seconds: float = DEFAULT_TTL_SECONDS,
               clock=time.monotonic) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="sepsim session service", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    sessions: dict[str, ApiSession] = {}
    create_cache: dict[str, dict] = {}
    patients = {}
    if cohort is not None:
        imputed = cohort.imputed()
        patients = {t.patient_id: t for t in imputed.trajectories}

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error(422, "validation", str(exc.errors()[:3]))

    def get_live(session_id: str) -> ApiSession | JSONResponse:
        api = sessions.get(session_id)
        if api is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        now = clock()
        if now - api.last_access > ttl_seconds:
            del sessions[session_id]
            return _error(404, "session_expired", f"session {session_id!r} expired")
        api.last_access = now
        return api

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions")
    def create_session(body: CreateSession):
        if body.request_id and body.request_id in create_cache:
            return create_cache[body.request_id]
        if body.source == "cohort":
            if cohort is None:
                return _error(422, "no_cohort", "service started without a cohort")
            patient = patients.get(body.patient_id)
            if patient is None:
                return _error(404, "unknown_patient",
                              f"no patient {body.patient_id!r} in the cohort")
        else:
            patient = impute(sample_admission(body.seed), world.norm.median)
        session = env_reset(world, patient, seed=body.seed,
                            config=EnvConfig(max_steps=body.max_steps))
        now = clock()
        sessions[session.session_id] = ApiSession(session=session, owner=body.owner,
                                                  created_at=now, last_access=now)
        payload = _state_payload(session)
        if body.request_id:
            create_cache[body.request_id] = payload
        return payload

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        api = get_live(session_id)
        if isinstance(api, JSONResponse):
            return api
        return _state_payload(api.session)

    @app.post("/sessions/{session_id}/simulate")
    def simulate(session_id: str, body: SimulateBody):
        api = get_live(session_id)
        if isinstance(api, JSONResponse):
            return api
        if body.request_id and body.request_id in api.request_cache:
            return api.request_cache[body.request_id]
        if api.session.status != "running":
            return _error(409, "terminal_session",
                          f"session is {api.session.status}")
        parsed = validate_simulation_args({"actions": body.actions})
        from .adapter import ToolError
        if isinstance(parsed, ToolError):
            return _error(422, parsed.code, parsed.message)
        try:
            cands = simulate_candidates(api.session, parsed)
        except BudgetError as e:
            return _error(429, "sim_budget_exhausted", str(e))
        except SessionStateError as e:
            return _error(409, "terminal_session", str(e))
        payload = _candidate_payload(api.session, cands)
        api.http_log.append({"endpoint": "simulate", "actions": body.actions})
        if body.request_id:
            api.request_cache[body.request_id] = payload
        return payload

    @app.post("/sessions/{session_id}/prescribe")
    def prescribe(session_id: str, body: PrescribeBody):
        api = get_live(session_id)
        if isinstance(api, JSONResponse):
            return api
        if body.request_id and body.request_id in api.request_cache:
            return api.request_cache[body.request_id]
        if api.session.status != "running":
            return _error(409, "terminal_session", f"session is {api.session.status}")
        if not (0 <= body.vasopressor <= 4 and 0 <= body.iv_fluid <= 4):
            return _error(422, "range", "levels must be integers 0-4")
        action = Action(body.vasopressor, body.iv_fluid)
        next_values, reward, status = env_step(api.session, action)
        verdict = api.session.verdicts[-1]
        payload = {
            "status": status,
            "reward": float(reward),
            "verdict": {"adherent": verdict.adherent,
                        "rules": list(verdict.violated_rules),
                        "unsafe": verdict.unsafe},
            "state": _state_payload(api.session),
        }
        api.http_log.append({"endpoint": "prescribe",
                             "action": [body.vasopressor, body.iv_fluid]})
        if body.request_id:
            api.request_cache[body.request_id] = payload
        return payload

    @app.get("/sessions/{session_id}/trace")
    def trace(session_id: str):
        api = get_live(session_id)
        if isinstance(api, JSONResponse):
            return api
        t = finish_trace(api.session, policy_name=f"api:{api.owner}")
        return {
            "session_id": t.session_id, "status": t.status, "steps": t.steps,
            "tool_log": t.tool_log, "http_log": api.http_log,
            "raw_reward": t.raw_reward, "shaped_reward": t.shaped_reward,
            "violation_steps": t.violation_steps, "overrun": t.overrun,
            # named series so an exported trace replays with no client-side math
            "timeline": _timeline(api.session),
            "verdicts": [{"adherent": v.adherent, "rules": list(v.violated_rules),
                          "unsafe": v.unsafe} for v in api.session.verdicts],
            "actions": [[s.action.vaso_bin, s.action.fluid_bin]
                        for s in api.session.steps],
        }

    return app
