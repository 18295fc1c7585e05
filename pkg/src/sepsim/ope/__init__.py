from .behavior import BehaviorModel
from .clinical import (BehaviorAsPolicy, EvalReport, LoggedReplayPolicy,
                       episode_from_trajectory,
                       evaluate_policy, fit_behavior,
                       policy_probs_for_trajectory, render_report_table,
                       trajectory_features)
from .core import (Episode, OpeConfig, discounted_returns, dr,
                   importance_ratios, step_ratios, wis, wpdis)
from .fqe import QModel, fit_q_fqe

__all__ = [
    "BehaviorModel", "BehaviorAsPolicy", "LoggedReplayPolicy", "EvalReport", "episode_from_trajectory",
    "evaluate_policy", "fit_behavior", "policy_probs_for_trajectory",
    "render_report_table", "trajectory_features", "Episode", "OpeConfig",
    "discounted_returns", "dr", "importance_ratios", "step_ratios", "wis",
    "wpdis", "QModel", "fit_q_fqe",
]
