"""sepsim: sepsis dosing simulator and treatment-policy evaluation toolkit."""

__version__ = "0.1.0"

from .cohort import (Action, Cohort, DiscretizationSpec, NormalizationSpec,
                     RawDoses, Static, Step, Trajectory, compute_ne_eq,
                     compute_tev, discretize_action, fit_discretization,
                     impute, load_cohort, save_cohort)
from .synth import SynthConfig, generate_synthetic_cohort

__all__ = [
    "Action", "Cohort", "DiscretizationSpec", "NormalizationSpec", "RawDoses",
    "Static", "Step", "Trajectory", "compute_ne_eq", "compute_tev",
    "discretize_action", "fit_discretization", "impute", "load_cohort",
    "save_cohort", "SynthConfig", "generate_synthetic_cohort", "__version__",
]
