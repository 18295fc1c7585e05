import json

import numpy as np
import pytest

from sepsim.adapter import (AdapterConfig, ExternalAgentPolicy, ToolError,
                            parse_action_string, render_candidates,
                            render_prescription_update, render_state,
                            run_external_episode, validate_prescription_args,
                            validate_simulation_args)
from sepsim.agent import EnvConfig, env_reset
from sepsim.cohort import Action
from sepsim.errors import ContractError
from sepsim.synth import demo_admission, generate_synthetic_cohort
from sepsim.worldmodel import ModelConfig, init_params

TINY = ModelConfig(hidden_dim=8, static_embed_dim=4, action_embed_dim=4,
                   vent_hidden_dim=6, outcome_hidden_dim=6, window_k=4,
                   dropout=0.0, batch_size=8)


@pytest.fixture(scope="module")
def world():
    cohort = generate_synthetic_cohort(77, 12).imputed()
    return init_params(0, TINY, cohort.norm, cohort.disc)


class ScriptedAgent:
    """Replays a fixed list of tool calls."""

    def __init__(self, calls):
        self.calls = list(calls)
        self.seen_messages = []

    def __call__(self, messages):
        self.seen_messages.append(list(messages))
        return self.calls.pop(0)


class TestParsing:
    def test_action_string(self):
        assert parse_action_string("[0,4]") == Action(0, 4)
        assert parse_action_string(" [ 3 , 2 ] ") == Action(3, 2)

    @pytest.mark.parametrize("bad", ["[5,0]", "[0]", "0,4", "[a,b]", "[0,4,1]"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ContractError):
            parse_action_string(bad)

    def test_simulation_budget(self):
        err = validate_simulation_args({"actions": ["[0,1]"] * 4})
        assert isinstance(err, ToolError) and err.code == "budget"
        assert err.message == "Maximum 3 actions per call"

    def test_prescription_range(self):
        err = validate_prescription_args({"vasopressor": 7, "iv_fluid": 0})
        assert isinstance(err, ToolError) and err.code == "range"
        ok = validate_prescription_args({"vasopressor": 0, "iv_fluid": 4})
        assert ok == Action(0, 4)


class TestRendering:
    def test_state_rendering_shape(self, world):
        s = env_reset(world, demo_admission(), seed=0)
        text = render_state(s)
        assert text.startswith("# Hour 0 Since ICU Admission (timestep t=0)")
        assert "## Vital Signs History" in text
        assert "- meanbp(mmHg): [69.8]" in text
        assert "- lactate(mmol/L): [2.6]" in text
        assert "## Urine Output History" in text
        assert "- urine_output(mL/4h): [600.0]" in text

    def test_candidate_rendering_uses_level_names(self, world):
        from sepsim.agent import simulate_candidates
        s = env_reset(world, demo_admission(), seed=0)
        cands = simulate_candidates(s, [Action(0, 1), Action(0, 4)])
        text = render_candidates(cands)
        assert "### Option 1: IV Fluid=Low, Vasopressor=None" in text
        assert "### Option 2: IV Fluid=Very High, Vasopressor=None" in text
        assert "Predicted Mortality Risk:" in text


class TestProtocolWalkthrough:
    def test_simulate_then_prescribe(self, world):
        agent = ScriptedAgent([
            {"name": "simulation", "arguments": {"actions": ["[0,1]", "[0,2]", "[0,4]"]}},
            {"name": "prescription", "arguments": {"vasopressor": 0, "iv_fluid": 4}},
            {"name": "prescription", "arguments": {"vasopressor": 0, "iv_fluid": 2}},
        ])
        policy = ExternalAgentPolicy(agent)
        session = env_reset(world, demo_admission(), seed=0,
                            config=EnvConfig(max_steps=2))
        trace = run_external_episode(policy, session)
        # transcript order: simulation request, its response, prescriptions
        kinds = [("request" in e and e.get("request", {}).get("name")) or "response"
                 for e in policy.transcript]
        assert kinds[0] == "simulation" and kinds[1] == "response"
        assert kinds[2] == "prescription"
        assert [s["action"] for s in trace.steps] == [[0, 4], [0, 2]]
        sim_response = policy.transcript[1]["response"]
        assert "## Simulation Results" in json.loads(sim_response)["result"]

    def test_out_of_range_prescription_not_recorded(self, world):
        agent = ScriptedAgent([
            {"name": "prescription", "arguments": {"vasopressor": 7, "iv_fluid": 0}},
            {"name": "prescription", "arguments": {"vasopressor": 1, "iv_fluid": 1}},
        ])
        policy = ExternalAgentPolicy(agent)
        session = env_reset(world, demo_admission(), seed=0,
                            config=EnvConfig(max_steps=1))
        trace = run_external_episode(policy, session)
        assert [s["action"] for s in trace.steps] == [[1, 1]]
        error_payload = json.loads(policy.transcript[1]["response"])
        assert error_payload["error"]["code"] == "range"

    def test_four_action_simulation_rejected(self, world):
        agent = ScriptedAgent([
            {"name": "simulation", "arguments": {"actions": ["[0,0]", "[0,1]", "[0,2]", "[0,3]"]}},
            {"name": "prescription", "arguments": {"vasopressor": 0, "iv_fluid": 1}},
        ])
        policy = ExternalAgentPolicy(agent)
        session = env_reset(world, demo_admission(), seed=0,
                            config=EnvConfig(max_steps=1))
        run_external_episode(policy, session)
        err = json.loads(policy.transcript[1]["response"])
        assert err["error"]["message"] == "Maximum 3 actions per call"

    def test_crashing_agent_falls_back_to_guideline(self, world):
        def broken(messages):
            raise RuntimeError("connection lost")

        policy = ExternalAgentPolicy(broken, AdapterConfig(fallback="guideline"))
        session = env_reset(world, demo_admission(), seed=0,
                            config=EnvConfig(max_steps=1))
        trace = run_external_episode(policy, session)
        assert len(trace.steps) == 1          # guideline decided
        assert trace.steps[0]["adherent"]

    def test_abstain_fallback_truncates(self, world):
        def broken(messages):
            raise RuntimeError("boom")

        policy = ExternalAgentPolicy(broken, AdapterConfig(fallback="abstain"))
        session = env_reset(world, demo_admission(), seed=0)
        trace = run_external_episode(policy, session)
        assert trace.status == "truncated" and trace.overrun

    def test_endpoint_policy_over_logged_states(self, world):
        # external agents can be scored by the evaluator: each logged state
        # opens a fresh conversation and the prescription is the delta action
        from sepsim.adapter import external_agent_adapter
        from sepsim.ope.clinical import policy_probs_for_trajectory
        from sepsim.synth import generate_synthetic_cohort

        def agent(messages):
            assert "## Vital Signs History" in messages[0]["content"]
            return {"name": "prescription", "arguments": {"vasopressor": 1, "iv_fluid": 2}}

        policy = external_agent_adapter(agent)
        cohort = generate_synthetic_cohort(77, 4)
        traj = cohort.imputed().trajectories[0]
        probs = policy_probs_for_trajectory(policy, traj, cohort, world)
        from sepsim.cohort import Action
        assert np.all(probs[:, Action(1, 2).index] == 1.0)

    def test_adapter_accepts_url_and_dict(self):
        from sepsim.adapter import HttpAgentTransport, external_agent_adapter
        p = external_agent_adapter("http://localhost:9/agent")
        assert isinstance(p.transport, HttpAgentTransport)
        p2 = external_agent_adapter({"url": "http://localhost:9/a", "fallback": "abstain"})
        assert p2.config.fallback == "abstain"

    def test_update_message_after_prescription(self, world):
        agent = ScriptedAgent([
            {"name": "prescription", "arguments": {"vasopressor": 0, "iv_fluid": 4}},
            {"name": "prescription", "arguments": {"vasopressor": 0, "iv_fluid": 0}},
        ])
        policy = ExternalAgentPolicy(agent)
        session = env_reset(world, demo_admission(), seed=0,
                            config=EnvConfig(max_steps=2))
        run_external_episode(policy, session)
        updates = [m for m in policy.messages if m["role"] == "user"]
        assert "Based on your decision, the patient received Very High IV fluid" \
            in updates[1]["content"]
        assert "# Hour 4 Since ICU Admission" in updates[1]["content"]
