"""Cohort-level policy evaluation: episodes, behavior fit, estimators, report.

Episode rewards are the raw physiological step rewards with the terminal
outcome reward at the final decision index (no shaping/clipping, which is a
rollout-training stabilizer; a switch adds the guideline penalties).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..agent import peek_candidates
from ..cohort import Action, Cohort, Trajectory
from ..errors import ContractError
from ..features import IDX
from ..policy import Policy, PolicyContext, cumulative_tev
from ..reward import RewardConfig, step_reward
from ..safety import judge_trajectory, safety_rates
from ..worldmodel.net import encode_step, initial_hidden, prev_action_indices, static_embedding
from ..worldmodel.params import WorldModelParams
from .behavior import BehaviorModel
from .core import Episode, OpeConfig, dr, wis, wpdis
from .fqe import fit_q_fqe

N_ACTIONS = 25


def step_features(values: np.ndarray, weight: float, cum_tev: float, hour: int,
                  prev_action: Action | None, norm) -> np.ndarray:
    """Evaluation features for one decision point: the normalized state, the
    fluid-load context, and indicator features on the clinical thresholds that
    drive treatment effects (so a linear value model can express them)."""
    z = norm.transform(values)
    w = max(weight, 1.0)
    map_ = values[IDX["meanbp"]]
    lactate = values[IDX["lactate"]]
    extra = np.array([
        min(cum_tev / (30.0 * w), 4.0),      # resuscitation bolus multiples
        min(cum_tev / (70.0 * w), 2.0),      # overload-cap fraction
        hour / 72.0,
        (prev_action.vaso_bin / 4.0) if prev_action else 0.0,
        (prev_action.fluid_bin / 4.0) if prev_action else 0.0,
        float(map_ < 65.0),
        float(map_ < 55.0),
        float(lactate > 2.0),
        float(cum_tev > 70.0 * w),
    ])
    return np.concatenate([z, extra])


def trajectory_features(traj: Trajectory, norm) -> np.ndarray:
    """step_features stacked over a logged trajectory."""
    if not np.all(np.isfinite(traj.values_matrix())):
        raise ContractError("impute the cohort before evaluation")
    rows = []
    cum = 0.0
    for t, s in enumerate(traj.steps):
        prev = traj.steps[t - 1].action if t > 0 else None
        rows.append(step_features(s.values, traj.static.weight, cum, s.hour,
                                  prev, norm))
        cum = cumulative_tev(traj.steps[:t + 1])
    return np.stack(rows)


def episode_from_trajectory(traj: Trajectory, norm,
                            reward_config: RewardConfig = RewardConfig(),
                            include_guideline_penalty: bool = False) -> Episode:
    T = len(traj)
    rewards = np.zeros(T)
    for t in range(T - 1):
        rewards[t] = step_reward(traj.steps[t].values, traj.steps[t + 1].values,
                                 reward_config)
    rewards[T - 1] += (reward_config.terminal_survive if traj.outcome == "survived"
                       else reward_config.terminal_die)
    if include_guideline_penalty:
        for t, verdict in enumerate(judge_trajectory(traj, traj.actions())):
            if not verdict.adherent:
                rewards[t] += reward_config.guideline_penalty
    return Episode(features=trajectory_features(traj, norm),
                   actions=np.array([s.action.index for s in traj.steps]),
                   rewards=rewards)


def policy_probs_for_trajectory(policy: Policy, traj: Trajectory, cohort: Cohort,
                                world: WorldModelParams | None = None) -> np.ndarray:
    """[T, 25] action distribution of the policy at every logged state.

    When a world model is supplied, the encoder state through each step is
    carried in the context so simulation-driven policies can query it.
    """
    probs = np.zeros((len(traj), N_ACTIONS))
    hidden = initial_hidden(world.config) if world is not None else None
    e_s = static_embedding(world, traj.static) if world is not None else None
    aprev = prev_action_indices(traj.steps)
    cum = 0.0
    for t, step in enumerate(traj.steps):
        extra = {"logged_action": step.action}
        if world is not None:
            hidden = encode_step(world, hidden, step.values, step.mask, aprev[t], e_s)
            h_t = hidden
            extra["simulate"] = lambda acts, h=h_t: peek_candidates(
                world, h, traj.static, list(acts)[:3])
        ctx = PolicyContext(
            static=traj.static, history=traj.steps[:t], state=step.values,
            mask=step.mask, hour=step.hour, t=t, cum_tev=cum,
            prev_action=traj.steps[t - 1].action if t > 0 else None,
            disc=cohort.disc, world=world, hidden=hidden, extra=extra)
        p = np.asarray(policy.action_distribution(ctx), dtype=float)
        if p.shape != (N_ACTIONS,) or not np.isclose(p.sum(), 1.0):
            raise ContractError(f"{policy.name}: bad action distribution at t={t}")
        probs[t] = p
        cum = cumulative_tev(traj.steps[:t + 1])
    return probs


@dataclass
class EvalReport:
    policy: str
    dr: float
    wis: float
    wpdis: float
    adherence_pct: float
    underdose_pct: float
    overdose_pct: float
    n_episodes: int
    n_decisions: int
    gamma: float
    settings: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        return EvalReport(**json.loads(text))


def render_report_table(reports) -> str:
    """Fixed-width text table comparing policy value and safety columns."""
    header = (f"{'Method':<24} | {'DR':>8} {'WIS':>8} {'WPDIS':>8} | "
              f"{'Adherence%':>10} | {'Under%':>7} {'Over%':>7}")
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.policy:<24} | {r.dr:>8.3f} {r.wis:>8.3f} {r.wpdis:>8.3f} | "
            f"{r.adherence_pct:>10.2f} | {r.underdose_pct:>7.2f} {r.overdose_pct:>7.2f}")
    return "\n".join(lines)


class LoggedReplayPolicy(Policy):
    """Delta distribution at the action actually logged at each state; the
    clinician reference row of the report."""

    name = "clinician_replay"

    def decide(self, ctx: PolicyContext, candidates) -> Action:
        logged = ctx.extra.get("logged_action")
        if logged is None:
            raise ContractError("replay policy needs the logged action in context")
        return logged


class BehaviorAsPolicy(Policy):
    """The fitted behavior model exposed through the policy interface."""

    name = "behavior_fit"

    def __init__(self, behavior: BehaviorModel, norm):
        self.behavior = behavior
        self.norm = norm

    def _features(self, ctx: PolicyContext) -> np.ndarray:
        return step_features(ctx.state, ctx.weight, ctx.cum_tev, ctx.hour,
                             ctx.prev_action, self.norm)

    def action_distribution(self, ctx: PolicyContext) -> np.ndarray:
        return self.behavior.probs(self._features(ctx))

    def decide(self, ctx: PolicyContext, candidates) -> Action:
        return Action.from_index(int(np.argmax(self.action_distribution(ctx))))


def fit_behavior(cohort: Cohort, split: str = "train", p_min: float = 0.01,
                 seed: int = 0) -> BehaviorModel:
    """Multinomial-logistic clinician model on the cohort's logged decisions."""
    trajs = cohort.imputed().split(split)
    if not trajs:
        raise ContractError(f"no trajectories in split {split!r}")
    X = np.concatenate([trajectory_features(t, cohort.norm) for t in trajs])
    A = np.concatenate([[s.action.index for s in t.steps] for t in trajs])
    return BehaviorModel(n_actions=N_ACTIONS, p_min=p_min, seed=seed).fit(X, A)


def evaluate_policy(cohort: Cohort, policy: Policy,
                    world: WorldModelParams | None = None,
                    split: str = "test",
                    ope_config: OpeConfig = OpeConfig(),
                    reward_config: RewardConfig = RewardConfig(),
                    behavior: BehaviorModel | None = None,
                    fqe_iterations: int = 50,
                    include_guideline_penalty: bool = False,
                    seed: int = 0) -> EvalReport:
    """DR / WIS / WPDIS plus guideline and unsafe-action rates for one policy.

    The behavior model and the fitted-Q model are trained on the train split;
    estimates are computed on `split`. Deterministic given the seed.
    """
    imputed = cohort.imputed()
    eval_trajs = imputed.split(split)
    train_trajs = imputed.split("train")
    if not eval_trajs:
        raise ContractError(f"no trajectories in split {split!r}")
    behavior = behavior or fit_behavior(cohort, seed=seed)

    def bundle(trajs):
        episodes = [episode_from_trajectory(t, cohort.norm, reward_config,
                                            include_guideline_penalty)
                    for t in trajs]
        pi_e = [policy_probs_for_trajectory(policy, t, cohort, world) for t in trajs]
        pi_b = [behavior.probs(ep.features) for ep in episodes]
        return episodes, pi_e, pi_b

    train_eps, train_pi_e, _ = bundle(train_trajs)
    eval_eps, eval_pi_e, eval_pi_b = bundle(eval_trajs)

    # clinical returns live within +-(terminal + a few step rewards)
    q_model = fit_q_fqe(train_eps, train_pi_e, gamma=ope_config.gamma,
                        iterations=fqe_iterations, n_actions=N_ACTIONS,
                        target_clip=(-40.0, 40.0))
    q_values = [q_model.q_values(ep.features) for ep in eval_eps]

    dr_v = dr(eval_eps, eval_pi_e, eval_pi_b, q_values, ope_config)
    wis_v = wis(eval_eps, eval_pi_e, eval_pi_b, ope_config)
    wpdis_v = wpdis(eval_eps, eval_pi_e, eval_pi_b, ope_config)

    # safety profile of the policy's own choices on the logged states
    rng = np.random.default_rng(seed)
    actions_per_traj = []
    for traj, probs in zip(eval_trajs, eval_pi_e):
        actions_per_traj.append([Action.from_index(int(rng.choice(N_ACTIONS, p=p)))
                                 for p in probs])
    rates = safety_rates(eval_trajs, actions_per_traj)

    return EvalReport(
        policy=policy.name,
        dr=dr_v, wis=wis_v, wpdis=wpdis_v,
        adherence_pct=rates.adherence_pct,
        underdose_pct=rates.underdose_pct,
        overdose_pct=rates.overdose_pct,
        n_episodes=len(eval_eps),
        n_decisions=rates.n_steps,
        gamma=ope_config.gamma,
        settings={
            "split": split,
            "seed": seed,
            "eps": ope_config.eps,
            "ratio_clip": list(ope_config.ratio_clip) if ope_config.ratio_clip else None,
            "fqe_iterations": fqe_iterations,
            "p_min": behavior.p_min,
            "include_guideline_penalty": include_guideline_penalty,
            "reward": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in asdict(reward_config).items()},
        },
    )
