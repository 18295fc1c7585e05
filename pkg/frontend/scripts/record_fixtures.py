"""Record cockpit contract fixtures from the real session service.

Trains a small deterministic model, drives the HTTP API, and freezes the
responses under frontend/fixtures/. Rerunning reproduces identical files.

Usage: python3 frontend/scripts/record_fixtures.py
"""

import json
import pathlib
import sys

from fastapi.testclient import TestClient

from sepsim.agent import EnvConfig, env_reset, env_step
from sepsim.cohort import Action, impute
from sepsim.service import create_app
from sepsim.synth import generate_synthetic_cohort, sample_admission
from sepsim.worldmodel import ModelConfig, init_params, train

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

MODEL_CONFIG = ModelConfig(hidden_dim=48, static_embed_dim=16, action_embed_dim=16,
                           vent_hidden_dim=32, outcome_hidden_dim=32, window_k=8,
                           batch_size=256, max_epochs=8)


def build_world():
    cohort = generate_synthetic_cohort(11, 800)
    params = init_params(0, MODEL_CONFIG, cohort.norm, cohort.disc)
    best, _ = train(params, cohort, seed=0)
    return best


def find_dying_seed(world, limit=60):
    """Untreated admission that the model predicts to death (terminal lock fixture)."""
    for seed in range(limit):
        patient = impute(sample_admission(seed), world.norm.median)
        session = env_reset(world, patient, seed=seed, config=EnvConfig(max_steps=14))
        while session.status == "running":
            env_step(session, Action(0, 0))
        if session.status == "died":
            return seed, session.step_count
    raise SystemExit("no dying rollout found; retune the recorder")


def dump(name, payload):
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    world = build_world()
    client = TestClient(create_app(world, None))

    r = client.post("/sessions", json={"source": "synthetic", "seed": 3})
    created = r.json()
    sid = created["session_id"]
    dump("create", created)

    r = client.post(f"/sessions/{sid}/simulate",
                    json={"actions": ["[0,1]", "[0,2]", "[0,4]"]})
    dump("simulate", r.json())

    r = client.post(f"/sessions/{sid}/simulate",
                    json={"actions": ["[0,0]", "[0,1]", "[0,2]", "[0,3]"]})
    assert r.status_code == 422
    dump("budget_error", r.json())

    r = client.post(f"/sessions/{sid}/prescribe", json={"vasopressor": 0, "iv_fluid": 4})
    dump("prescribe", r.json())
    client.post(f"/sessions/{sid}/prescribe", json={"vasopressor": 0, "iv_fluid": 2})

    r = client.get(f"/sessions/{sid}/trace")
    dump("trace", r.json())

    r = client.get(f"/sessions/{sid}/state")
    dump("state_final", r.json())

    dying_seed, steps = find_dying_seed(world)
    print(f"dying admission: seed {dying_seed} after {steps} steps")
    r = client.post("/sessions", json={"source": "synthetic", "seed": dying_seed,
                                       "max_steps": 14})
    dsid = r.json()["session_id"]
    status = "running"
    while status == "running":
        rr = client.post(f"/sessions/{dsid}/prescribe",
                         json={"vasopressor": 0, "iv_fluid": 0})
        status = rr.json()["status"]
    r = client.get(f"/sessions/{dsid}/state")
    died = r.json()
    assert died["status"] == "died", died["status"]
    dump("died_state", died)
    return 0


if __name__ == "__main__":
    sys.exit(main())
