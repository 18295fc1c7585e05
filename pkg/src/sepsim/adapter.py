"""Hosting external tool-calling agents over the two-tool wire protocol.

The protocol (bit-exact schemas):
  simulation request    {"actions": ["[v,f]", ...]}   1..3 entries, v,f in 0..4
  prescription request  {"vasopressor": int, "iv_fluid": int}
Responses render the predicted vitals/labs as plain text with dose levels
named None/Low/Medium/High/Very High. Malformed calls produce structured
tool errors (never crashes) and the decision is not recorded.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .agent import Candidate, Session
from .cohort import Action, LEVEL_NAMES
from .errors import ContractError
from .features import IDX
from .policy import Policy, PolicyContext, delta_distribution

VITAL_FEATURES = ("heart_rate", "meanbp", "resp_rate", "spo2", "temp_c",
                  "fio2", "gcs", "shock_index")
LAB_FEATURES = ("albumin", "alt", "ast", "anion_gap", "base_excess",
                "bicarbonate", "bilirubin_total", "bun", "chloride",
                "creatinine", "glucose", "hematocrit", "hemoglobin", "inr",
                "lactate", "magnesium", "paco2", "ph", "platelet", "potassium",
                "pt", "ptt", "sodium", "total_co2", "wbc")
UNITS = {
    "heart_rate": "bpm", "meanbp": "mmHg", "resp_rate": "breaths/min",
    "spo2": "%", "temp_c": "C", "fio2": "", "gcs": "", "shock_index": "",
    "albumin": "g/dL", "alt": "U/L", "ast": "U/L", "anion_gap": "mEq/L",
    "base_excess": "mEq/L", "bicarbonate": "mEq/L", "bilirubin_total": "mg/dL",
    "bun": "mg/dL", "chloride": "mEq/L", "creatinine": "mg/dL",
    "glucose": "mg/dL", "hematocrit": "%", "hemoglobin": "g/dL", "inr": "",
    "lactate": "mmol/L", "magnesium": "mEq/L", "paco2": "mmHg", "ph": "",
    "platelet": "K/uL", "potassium": "mEq/L", "pt": "sec", "ptt": "sec",
    "sodium": "mEq/L", "total_co2": "mEq/L", "wbc": "K/uL",
    "urine_output": "mL/4h",
}

ACTION_STRING_RE = re.compile(r"^\s*\[\s*([0-4])\s*,\s*([0-4])\s*\]\s*$")


def parse_action_string(text: str) -> Action:
    """'[vasopressor_level, iv_fluid_level]' -> Action."""
    m = ACTION_STRING_RE.match(text)
    if not m:
        raise ContractError(
            f"action must be '[vasopressor_level, iv_fluid_level]' with levels 0-4, got {text!r}")
    return Action(int(m.group(1)), int(m.group(2)))


def _fmt(x: float) -> str:
    return f"{float(x):.1f}"


def _history_lines(session: Session, names) -> list[str]:
    values_by_step = [s.values for s in session.steps] + [session.current_values]
    lines = []
    for name in names:
        series = ", ".join(_fmt(v[IDX[name]]) for v in values_by_step)
        unit = UNITS.get(name, "")
        lines.append(f"- {name}({unit}): [{series}]")
    return lines


def render_state(session: Session) -> str:
    """Current patient chart in the layout external agents are prompted with."""
    head = (f"# Hour {session.hour} Since ICU Admission (timestep t={session.step_count})"
            if session.step_count == 0
            else f"# Hour {session.hour} Since ICU Admission")
    parts = [head, "", "## Vital Signs History"]
    parts += _history_lines(session, VITAL_FEATURES)
    parts += ["", "## Laboratory Values History"]
    parts += _history_lines(session, LAB_FEATURES)
    parts += ["", "## Urine Output History"]
    parts += _history_lines(session, ("urine_output",))
    return "\n".join(parts)


def render_context_state(ctx: PolicyContext) -> str:
    """State rendering built from a policy context (logged-data evaluation),
    same layout as the live-session rendering."""
    head = (f"# Hour {ctx.hour} Since ICU Admission (timestep t={ctx.t})"
            if ctx.t == 0 else f"# Hour {ctx.hour} Since ICU Admission")
    values_by_step = [s.values for s in ctx.history] + [ctx.state]

    def lines(names):
        out = []
        for name in names:
            series = ", ".join(_fmt(v[IDX[name]]) for v in values_by_step)
            out.append(f"- {name}({UNITS.get(name, '')}): [{series}]")
        return out

    parts = [head, "", "## Vital Signs History"]
    parts += lines(VITAL_FEATURES)
    parts += ["", "## Laboratory Values History"]
    parts += lines(LAB_FEATURES)
    parts += ["", "## Urine Output History"]
    parts += lines(("urine_output",))
    return "\n".join(parts)


def render_patient_header(session: Session) -> str:
    gender = "Female" if session.static.gender else "Male"
    return "\n".join([
        "## Patient Information",
        f"- Age: {session.static.age:.0f} years",
        f"- Gender: {gender}",
        f"- Comorbidity Index: {session.static.comorbidity_index:.1f}",
    ])


def render_candidates(candidates: list[Candidate]) -> str:
    parts = ["## Simulation Results"]
    for i, c in enumerate(candidates, start=1):
        fluid = LEVEL_NAMES[c.action.fluid_bin]
        vaso = LEVEL_NAMES[c.action.vaso_bin]
        parts += ["", f"### Option {i}: IV Fluid={fluid}, Vasopressor={vaso}",
                  "Predicted patient state after 4 hours:", "", "**Vital Signs:**"]
        v = c.predicted.denormalized_mean
        for name in VITAL_FEATURES:
            label = name.replace("_", " ").title()
            unit = UNITS.get(name, "")
            parts.append(f"- {label}: {_fmt(v[IDX[name]])} {unit}".rstrip())
        parts += ["", "**Labs:**"]
        for name in ("lactate", "creatinine", "wbc", "platelet", "bilirubin_total"):
            label = name.replace("_", " ").title()
            parts.append(f"- {label}: {_fmt(v[IDX[name]])} {UNITS.get(name, '')}".rstrip())
        parts += ["", f"- Urine Output: {_fmt(v[IDX['urine_output']])} mL/4h",
                  f"- Predicted Mortality Risk: {100 * c.predicted_outcome.p_mortality:.1f}%"]
    return "\n".join(parts)


def render_prescription_update(session: Session, action: Action) -> str:
    fluid = LEVEL_NAMES[action.fluid_bin]
    vaso = LEVEL_NAMES[action.vaso_bin]
    if action.fluid_bin > 0 and action.vaso_bin > 0:
        received = f"{fluid} IV fluid and {vaso} vasopressor"
    elif action.fluid_bin > 0:
        received = f"{fluid} IV fluid"
    elif action.vaso_bin > 0:
        received = f"{vaso} vasopressor"
    else:
        received = "no additional treatment"
    lead = f"Based on your decision, the patient received {received} over the past 4 hours."
    if session.status == "survived":
        return (lead + f"\n\n## Patient Status Update (Hour {session.hour})\n"
                "The patient's condition has stabilized sufficiently for ICU discharge.")
    if session.status == "died":
        return (lead + f"\n\n## Patient Status Update (Hour {session.hour})\n"
                "The patient's condition has deteriorated beyond recovery.")
    if session.status == "truncated":
        return (lead + f"\n\n## Patient Status Update (Hour {session.hour})\n"
                "The observation window has ended.")
    return lead + "\n\n" + render_state(session)


@dataclass
class ToolError:
    code: str
    message: str

    def to_payload(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


def validate_simulation_args(arguments: dict) -> list[Action] | ToolError:
    actions = arguments.get("actions")
    if not isinstance(actions, list) or not actions:
        return ToolError("bad_request", "simulation requires a non-empty 'actions' list")
    if len(actions) > 3:
        return ToolError("budget", "Maximum 3 actions per call")
    parsed = []
    for a in actions:
        try:
            parsed.append(parse_action_string(str(a)))
        except ContractError as e:
            return ToolError("bad_action", str(e))
    return parsed


def validate_prescription_args(arguments: dict) -> Action | ToolError:
    try:
        vaso = int(arguments["vasopressor"])
        fluid = int(arguments["iv_fluid"])
    except (KeyError, TypeError, ValueError):
        return ToolError("bad_request",
                         "prescription requires integer 'vasopressor' and 'iv_fluid'")
    if not (0 <= vaso <= 4 and 0 <= fluid <= 4):
        return ToolError("range", "levels must be integers 0-4")
    return Action(vaso, fluid)


@dataclass
class AdapterConfig:
    max_protocol_errors: int = 3
    fallback: str = "guideline"          # or "abstain" (-> truncation)
    timeout_s: float | None = None       # transports may enforce it


class AgentUnavailable(Exception):
    pass


class HttpAgentTransport:
    """POSTs the conversation to an external agent endpoint.

    Request body {"messages": [...]}; the endpoint must answer with one tool
    call {"name": ..., "arguments": {...}} (optionally nested under
    "tool_call"). Errors and timeouts surface as exceptions, which the
    adapter turns into its configured fallback.
    """

    def __init__(self, url: str, timeout_s: float = 30.0):
        self.url = url
        self.timeout_s = timeout_s

    def __call__(self, messages: list[dict]) -> dict:
        import httpx

        response = httpx.post(self.url, json={"messages": messages},
                              timeout=self.timeout_s)
        response.raise_for_status()
        payload = response.json()
        return payload.get("tool_call", payload)


class ExternalAgentPolicy(Policy):
    """Bridges a tool-calling agent to the Policy interface.

    transport(messages) receives the conversation so far, a list of
    {"role", "content"} dicts, and must return one tool call
    {"name": str, "arguments": dict}. One decide() call runs the multi-round
    simulate conversation for a single decision step; the session enforces
    the per-step simulation-call budget.
    """

    name = "external_agent"

    def __init__(self, transport: Callable[[list[dict]], dict],
                 config: AdapterConfig = AdapterConfig()):
        self.transport = transport
        self.config = config
        self.messages: list[dict] = []
        self.transcript: list[dict] = []

    def _fallback_action(self, ctx: PolicyContext) -> Action | None:
        if self.config.fallback == "guideline":
            from .agent import GuidelineRulePolicy
            return GuidelineRulePolicy().decide(ctx, [])
        return None

    def decide(self, ctx: PolicyContext, candidates) -> Action | None:
        simulate = ctx.extra.get("simulate")
        errors = 0
        while True:
            try:
                call = self.transport(list(self.messages))
            except Exception:
                return self._fallback_action(ctx)
            if not isinstance(call, dict) or "name" not in call:
                return self._fallback_action(ctx)
            self.transcript.append({"request": call})
            arguments = call.get("arguments") or {}

            if call["name"] == "simulation":
                parsed = validate_simulation_args(arguments)
                if isinstance(parsed, ToolError):
                    errors += 1
                    self._tool_response(json.dumps(parsed.to_payload(), sort_keys=True))
                elif simulate is None:
                    errors += 1
                    self._tool_response(json.dumps(
                        ToolError("unavailable", "simulation not available").to_payload(),
                        sort_keys=True))
                else:
                    try:
                        cands = simulate(parsed)
                    except Exception as e:
                        errors += 1
                        self._tool_response(json.dumps(
                            ToolError("budget", str(e)).to_payload(), sort_keys=True))
                    else:
                        self._tool_response(json.dumps(
                            {"result": render_candidates(cands)}, sort_keys=True))
            elif call["name"] == "prescription":
                action = validate_prescription_args(arguments)
                if isinstance(action, ToolError):
                    errors += 1
                    self._tool_response(json.dumps(action.to_payload(), sort_keys=True))
                else:
                    return action
            else:
                errors += 1
                self._tool_response(json.dumps(
                    ToolError("unknown_tool", f"no tool named {call['name']!r}").to_payload(),
                    sort_keys=True))
            if errors >= self.config.max_protocol_errors:
                return self._fallback_action(ctx)

    def _tool_response(self, content: str) -> None:
        self.messages.append({"role": "tool", "content": content})
        self.transcript.append({"response": content})

    def observe(self, content: str) -> None:
        self.messages.append({"role": "user", "content": content})

    def action_distribution(self, ctx: PolicyContext) -> np.ndarray:
        # an external agent is a black box: its distribution at a state is the
        # delta at whatever it prescribes there (one full tool conversation,
        # started fresh from the rendered context)
        saved = self.messages
        self.messages = [{"role": "user", "content": render_context_state(ctx)}]
        try:
            action = self.decide(ctx, [])
        finally:
            self.messages = saved
        if action is None:
            raise ContractError("external agent abstained; no distribution")
        return delta_distribution(action)


def external_agent_adapter(endpoint_config) -> ExternalAgentPolicy:
    """Build a hosted-agent policy from an endpoint description.

    endpoint_config is either a callable transport, an URL string, or a dict
    {"url": ..., "timeout_s": ..., "fallback": ..., "max_protocol_errors": ...}.
    """
    config = AdapterConfig()
    if callable(endpoint_config):
        transport = endpoint_config
    elif isinstance(endpoint_config, str):
        transport = HttpAgentTransport(endpoint_config)
    elif isinstance(endpoint_config, dict):
        transport = HttpAgentTransport(endpoint_config["url"],
                                       timeout_s=endpoint_config.get("timeout_s", 30.0))
        config = AdapterConfig(
            max_protocol_errors=endpoint_config.get("max_protocol_errors", 3),
            fallback=endpoint_config.get("fallback", "guideline"),
            timeout_s=endpoint_config.get("timeout_s"))
    else:
        raise ContractError("endpoint_config must be a callable, URL, or dict")
    return ExternalAgentPolicy(transport, config)


def run_external_episode(policy: ExternalAgentPolicy, session: Session,
                         reward_config=None) -> "RolloutTrace":
    """Episode loop for external agents: render state, let the agent converse
    (simulate rounds then prescribe), step, repeat."""
    from .agent import env_step, finish_trace, simulate_candidates
    from .reward import RewardConfig

    reward_config = reward_config or RewardConfig()
    policy.observe(render_patient_header(session) + "\n\n" + render_state(session))
    while session.status == "running":
        ctx = session.context(simulate=lambda acts: simulate_candidates(session, acts))
        action = policy.decide(ctx, [])
        if action is None:
            session.status = "truncated"
            session.overrun = True
            break
        env_step(session, action, reward_config)
        policy.observe(render_prescription_update(session, action))
    return finish_trace(session, policy.name, reward_config)
