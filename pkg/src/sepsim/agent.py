"""Propose-simulate-refine decision loop over the learned patient model.

A Session owns one simulated patient: the committed trajectory, the recurrent
encoder state (kept incrementally, identical to re-encoding the prefix), and
lifecycle status. Candidate actions can be simulated read-only; committing an
action advances the patient to the transition head's mean response.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field

import numpy as np

from .cohort import Action, RawDoses, Static, Step, Trajectory
from .errors import BudgetError, ContractError, SessionStateError
from .features import D, FEATURES, IDX
from .policy import MAX_CANDIDATES, Policy, PolicyContext, cumulative_tev, delta_distribution
from .reward import RewardConfig, TraceSummary, step_reward, trajectory_reward
from .safety import SafetyVerdict, check_guideline, is_septic_shock
from .scores import hard_sofa
from .worldmodel.net import (HiddenState, OutcomePrediction, TransitionPrediction,
                             encode_step, outcome_prob, predict_transition,
                             static_embedding)
from .worldmodel.params import START_TOKEN, WorldModelParams


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 20                  # decisions per episode (~80 hours)
    sim_actions_per_call: int = 3
    sim_calls_per_step: int = 5          # external-agent budget per decision
    death_threshold: float = 0.9         # mortality-head probability
    death_consecutive: int = 2
    recovery_consecutive: int = 3
    sample_transitions: bool = False     # sample the Gaussian instead of its mean


@dataclass
class Candidate:
    action: Action
    predicted: TransitionPrediction
    predicted_outcome: OutcomePrediction


@dataclass
class Session:
    session_id: str
    world: WorldModelParams
    static: Static
    config: EnvConfig
    seed: int
    steps: list[Step] = field(default_factory=list)       # committed decisions
    current_values: np.ndarray | None = None
    current_mask: np.ndarray | None = None
    hidden: HiddenState | None = None                     # encodes all states so far
    status: str = "running"
    step_count: int = 0
    rewards: list[float] = field(default_factory=list)
    verdicts: list[SafetyVerdict] = field(default_factory=list)
    tool_log: list[dict] = field(default_factory=list)
    overrun: bool = False
    sim_calls_this_step: int = 0
    death_streak: int = 0
    recovery_streak: int = 0
    _rng: np.random.Generator | None = None

    @property
    def hour(self) -> int:
        return 4 * self.step_count

    @property
    def current_vaso_level(self) -> int:
        return self.steps[-1].action.vaso_bin if self.steps else 0

    @property
    def cum_tev(self) -> float:
        return cumulative_tev(self.steps)

    def in_shock(self) -> bool:
        return is_septic_shock(self.current_values, self.current_vaso_level)

    def context(self, simulate=None) -> PolicyContext:
        return PolicyContext(
            static=self.static, history=self.steps, state=self.current_values,
            mask=self.current_mask, hour=self.hour, t=self.step_count,
            cum_tev=self.cum_tev,
            prev_action=self.steps[-1].action if self.steps else None,
            disc=self.world.disc, world=self.world, hidden=self.hidden,
            extra={"simulate": simulate} if simulate else {})

    def state_hash(self) -> int:
        payload = (self.current_values.tobytes(), self.current_mask.tobytes(),
                   b"".join(h.tobytes() for h in self.hidden.layers),
                   self.step_count, self.status, len(self.steps))
        return hash(payload)


def representative_doses(action: Action, disc) -> RawDoses:
    """Interior doses of the action's bins, used for simulated steps so that
    downstream dose arithmetic (fluid adequacy, NE-eq) stays meaningful."""
    ne = disc.representative_ne_eq(action.vaso_bin)
    tev = disc.representative_tev(action.fluid_bin)
    fluids = (("NaCl 0.9%", tev),) if tev > 0 else ()
    return RawDoses(norepinephrine=ne, fluids=fluids)


def env_reset(world: WorldModelParams, patient: Trajectory, seed: int = 0,
              config: EnvConfig = EnvConfig()) -> Session:
    """Start a session at the patient's hour-0 state (first recorded window)."""
    if not patient.steps:
        raise ContractError("patient trajectory must have at least one step")
    first = patient.steps[0]
    values = np.array(first.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ContractError("impute the admission state before starting a session")
    session = Session(session_id=uuid.uuid4().hex[:12], world=world,
                      static=patient.static, config=config, seed=seed)
    session._rng = np.random.default_rng(seed)
    session.current_values = values
    session.current_mask = np.array(first.mask, dtype=bool)
    e_s = static_embedding(world, patient.static)
    session.hidden = encode_step(
        world, _zero_hidden(world), values, session.current_mask, START_TOKEN, e_s)
    return session


def _zero_hidden(world: WorldModelParams) -> HiddenState:
    from .worldmodel.net import initial_hidden
    return initial_hidden(world.config)


def peek_candidates(world: WorldModelParams, hidden: HiddenState, static: Static,
                    actions) -> list[Candidate]:
    """Stateless candidate previews: next-state prediction plus the mortality
    risk after hypothetically committing each action."""
    out = []
    e_s = static_embedding(world, static)
    for action in actions:
        pred = predict_transition(world, hidden, action)
        next_values = _concrete_state(world, static, action, pred.denormalized_mean,
                                      pred.vent_prob)
        h_next = encode_step(world, hidden, next_values, np.ones(D, dtype=bool),
                             action.index, e_s)
        outcome = OutcomePrediction(p_mortality=float(outcome_prob(world, h_next.top)))
        out.append(Candidate(action=action, predicted=pred, predicted_outcome=outcome))
    return out


def simulate_candidates(session: Session, actions) -> list[Candidate]:
    """Read-only world-model queries for 1..3 candidate actions.

    Identical repeated calls return identical results; the session state is
    untouched. Calls beyond the per-step budget trip the overrun pathway.
    """
    if session.status != "running":
        raise SessionStateError(f"session is {session.status}")
    actions = list(actions)
    if not 1 <= len(actions) <= session.config.sim_actions_per_call:
        raise BudgetError("Maximum 3 actions per call")
    if session.sim_calls_this_step >= session.config.sim_calls_per_step:
        session.overrun = True
        raise BudgetError("simulation call budget for this step exhausted")
    session.sim_calls_this_step += 1
    out = peek_candidates(session.world, session.hidden, session.static, actions)
    session.tool_log.append({
        "tool": "simulation", "t": session.step_count,
        "actions": [[a.vaso_bin, a.fluid_bin] for a in actions],
    })
    return out


def _concrete_state(world: WorldModelParams, static: Static, action: Action,
                    raw_values: np.ndarray, vent_prob: float) -> np.ndarray:
    """Clip a predicted state into physiologic range, pin statics, and
    recompute the derived severity score."""
    values = np.array(raw_values)
    for j, f in enumerate(FEATURES):
        values[j] = min(max(values[j], f.lo), f.hi)
    values[IDX["age"]] = static.age
    values[IDX["gender"]] = static.gender
    values[IDX["weight"]] = static.weight
    values[IDX["readmission"]] = static.readmission
    values[IDX["comorbidity_index"]] = static.comorbidity_index
    values[IDX["gcs"]] = round(values[IDX["gcs"]])
    if vent_prob < 0.5:
        values[IDX["vent_status"]] = 0.0
    else:
        values[IDX["vent_status"]] = float(min(max(round(values[IDX["vent_status"]]), 1), 4))
    ne = world.disc.representative_ne_eq(action.vaso_bin)
    values[IDX["sofa"]] = float(hard_sofa(values, ne_eq=ne))
    return values


def _materialize_state(session: Session, action: Action,
                       pred: TransitionPrediction, sample: bool) -> np.ndarray:
    """Turn a transition prediction into a concrete next clinical state."""
    if sample:
        z = pred.mu + pred.sigma * session._rng.standard_normal(D)
        values = session.world.norm.inverse(z)
    else:
        values = pred.denormalized_mean
    return _concrete_state(session.world, session.static, action, values,
                           pred.vent_prob)


def env_step(session: Session, action: Action,
             reward_config: RewardConfig = RewardConfig()):
    """Commit an action: record it, advance the patient by the predicted
    response, and update lifecycle status.

    Returns (next_values, reward, status).
    """
    if session.status != "running":
        raise SessionStateError(f"session is {session.status}")

    verdict = check_guideline(session.steps, session.current_values, action,
                              hour=session.hour, weight=session.static.weight)
    session.verdicts.append(verdict)

    committed = Step(values=session.current_values, mask=session.current_mask,
                     doses=representative_doses(action, session.world.disc),
                     action=action, hour=session.hour)
    session.steps.append(committed)

    pred = predict_transition(session.world, session.hidden, action)
    next_values = _materialize_state(session, action, pred,
                                     sample=session.config.sample_transitions)
    reward = step_reward(session.current_values, next_values, reward_config)
    session.rewards.append(reward)

    e_s = static_embedding(session.world, session.static)
    session.hidden = encode_step(session.world, session.hidden, next_values,
                                 np.ones(D, dtype=bool), action.index, e_s)
    session.current_values = next_values
    session.current_mask = np.ones(D, dtype=bool)
    session.step_count += 1
    session.sim_calls_this_step = 0

    p_mort = float(outcome_prob(session.world, session.hidden.top))
    session.death_streak = session.death_streak + 1 \
        if p_mort > session.config.death_threshold else 0
    recovered = (next_values[IDX["sofa"]] <= 2.0
                 and next_values[IDX["lactate"]] < 2.0
                 and next_values[IDX["meanbp"]] >= 65.0)
    session.recovery_streak = session.recovery_streak + 1 if recovered else 0

    if session.death_streak >= session.config.death_consecutive:
        session.status = "died"
    elif session.recovery_streak >= session.config.recovery_consecutive:
        session.status = "survived"
    elif session.step_count >= session.config.max_steps:
        session.status = "truncated"
        session.overrun = True
    session.tool_log.append({
        "tool": "prescription", "t": session.step_count - 1,
        "action": [action.vaso_bin, action.fluid_bin],
        "reward": reward, "status": session.status,
    })
    return next_values, reward, session.status


@dataclass
class RolloutTrace:
    session_id: str
    policy: str
    status: str
    steps: list[dict]
    tool_log: list[dict]
    raw_reward: float
    shaped_reward: float
    violation_steps: int
    overrun: bool

    def to_json(self) -> str:
        return json.dumps({
            "session_id": self.session_id, "policy": self.policy,
            "status": self.status, "steps": self.steps, "tool_log": self.tool_log,
            "raw_reward": self.raw_reward, "shaped_reward": self.shaped_reward,
            "violation_steps": self.violation_steps, "overrun": self.overrun,
        }, indent=2)


def finish_trace(session: Session, policy_name: str,
                 reward_config: RewardConfig = RewardConfig()) -> RolloutTrace:
    violations = sum(not v.adherent for v in session.verdicts)
    summary = TraceSummary(step_rewards=list(session.rewards),
                           terminal=session.status if session.status != "running" else "truncated",
                           violation_steps=violations, overrun=session.overrun)
    raw, shaped = trajectory_reward(summary, reward_config)
    steps = [{
        "hour": s.hour, "action": [s.action.vaso_bin, s.action.fluid_bin],
        "values": [round(float(v), 6) for v in s.values],
        "reward": session.rewards[i] if i < len(session.rewards) else None,
        "adherent": session.verdicts[i].adherent if i < len(session.verdicts) else None,
        "unsafe": session.verdicts[i].unsafe if i < len(session.verdicts) else None,
    } for i, s in enumerate(session.steps)]
    return RolloutTrace(session_id=session.session_id, policy=policy_name,
                        status=session.status, steps=steps,
                        tool_log=list(session.tool_log), raw_reward=raw,
                        shaped_reward=shaped, violation_steps=violations,
                        overrun=session.overrun)


def run_episode(policy: Policy, session: Session,
                reward_config: RewardConfig = RewardConfig()) -> RolloutTrace:
    """Full propose -> simulate -> decide -> step loop until terminal."""
    while session.status == "running":
        ctx = session.context(simulate=lambda acts: simulate_candidates(session, acts))
        proposals = list(policy.propose(ctx))[:MAX_CANDIDATES]
        candidates = simulate_candidates(session, proposals) if proposals else []
        action = policy.decide(ctx, candidates)
        if action is None:
            session.status = "truncated"
            session.overrun = True
            break
        env_step(session, action, reward_config)
    return finish_trace(session, policy.name, reward_config)


# ---------------------------------------------------------------------------
# built-in policies

class ClinicianReplayPolicy(Policy):
    """Replays the actions logged on a reference trajectory."""

    name = "clinician_replay"

    def __init__(self, trajectory: Trajectory):
        self.trajectory = trajectory

    def decide(self, ctx: PolicyContext, candidates) -> Action:
        if ctx.t < len(self.trajectory.steps):
            return self.trajectory.steps[ctx.t].action
        return Action(0, 0)


class RandomUniformPolicy(Policy):
    name = "random_uniform"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def propose(self, ctx: PolicyContext) -> list[Action]:
        return [Action.from_index(int(i))
                for i in self.rng.integers(0, 25, size=MAX_CANDIDATES)]

    def decide(self, ctx: PolicyContext, candidates) -> Action:
        return Action.from_index(int(self.rng.integers(0, 25)))

    def action_distribution(self, ctx: PolicyContext) -> np.ndarray:
        return np.full(25, 1.0 / 25.0)


class GuidelineRulePolicy(Policy):
    """Deterministic encoding of the resuscitation rules; adherent by
    construction on any state (see safety module for the rule ids)."""

    name = "guideline"

    def decide(self, ctx: PolicyContext, candidates) -> Action:
        from .safety import prior_fluid_adequate
        prev_vaso = ctx.prev_action.vaso_bin if ctx.prev_action else 0
        cap = 70.0 * ctx.weight
        hypoperf = ctx.hypoperfusion

        if hypoperf and ctx.cum_tev < cap:
            fluid = 3 if ctx.hour < 8 else 2
        elif hypoperf and ctx.hour < 3:
            fluid = 1
        else:
            fluid = 0

        adequate = prior_fluid_adequate(ctx.history, ctx.weight)
        if ctx.map_ < 65.0 and adequate:
            vaso = min(4, max(1, prev_vaso + 1))
        elif ctx.map_ >= 65.0 and prev_vaso > 0:
            vaso = max(prev_vaso - 1, 0)
        else:
            vaso = 0
        return Action(vaso, fluid)


class GreedySimulationPolicy(Policy):
    """Always commits the candidate with the best one-step predicted reward
    (the short-horizon failure mode: it never weighs longer-term risk)."""

    name = "greedy_simulation"
    proposals = (Action(0, 1), Action(2, 2), Action(4, 4))

    def propose(self, ctx: PolicyContext) -> list[Action]:
        return list(self.proposals)

    def decide(self, ctx: PolicyContext, candidates) -> Action:
        if not candidates:
            candidates = self._simulate(ctx)
        scored = []
        for c in candidates:
            r = step_reward(ctx.state, c.predicted.denormalized_mean)
            scored.append((-r, c.action.vaso_bin, c.action.fluid_bin, c.action))
        scored.sort(key=lambda x: x[:3])
        return scored[0][3]

    def _simulate(self, ctx: PolicyContext):
        sim = ctx.extra.get("simulate")
        if sim is not None:
            return sim(list(self.proposals))
        if ctx.world is None or ctx.hidden is None:
            raise ContractError("greedy policy needs a world model to decide")
        out = []
        for action in self.proposals:
            pred = predict_transition(ctx.world, ctx.hidden, action)
            out.append(Candidate(action=action, predicted=pred,
                                 predicted_outcome=OutcomePrediction(0.0)))
        return out

    def action_distribution(self, ctx: PolicyContext) -> np.ndarray:
        return delta_distribution(self.decide(ctx, []))


def replay_logged_trace(trajectory: Trajectory,
                        reward_config: RewardConfig = RewardConfig()) -> RolloutTrace:
    """Score a logged trajectory as-is (no world model): the clinician-replay
    policy on its own data reproduces exactly these returns."""
    from .safety import judge_trajectory

    rewards = [step_reward(trajectory.steps[t].values, trajectory.steps[t + 1].values,
                           reward_config)
               for t in range(len(trajectory.steps) - 1)]
    verdicts = judge_trajectory(trajectory, trajectory.actions())
    violations = sum(not v.adherent for v in verdicts)
    summary = TraceSummary(step_rewards=rewards, terminal=trajectory.outcome,
                           violation_steps=violations, overrun=False)
    raw, shaped = trajectory_reward(summary, reward_config)
    steps = [{
        "hour": s.hour, "action": [s.action.vaso_bin, s.action.fluid_bin],
        "values": [round(float(v), 6) for v in s.values],
        "reward": rewards[i] if i < len(rewards) else None,
        "adherent": verdicts[i].adherent, "unsafe": verdicts[i].unsafe,
    } for i, s in enumerate(trajectory.steps)]
    return RolloutTrace(session_id=trajectory.patient_id, policy="clinician_replay",
                        status=trajectory.outcome, steps=steps, tool_log=[],
                        raw_reward=raw, shaped_reward=shaped,
                        violation_steps=violations, overrun=False)


BUILTIN_POLICIES = {
    "random": lambda seed=0: RandomUniformPolicy(seed),
    "guideline": lambda seed=0: GuidelineRulePolicy(),
    "greedy": lambda seed=0: GreedySimulationPolicy(),
}
