"""Feedback-loop trajectory optimization for folding cloth in half.

Modules:
    cloth_sim      quasi-static mass-spring cloth
    perception     labeled point clouds and the frozen bottom reference
    geometry       occupancy grids, IoU, convex hulls
    adaptation     grid-search parameter estimation and the forward model
    planner        constrained sampling, MPPI and the receding-horizon step
    harness        episodes, baselines and benchmark suites
    mask_ensemble  Full/Bottom/Upper mask selection from candidate masks
"""

from .cloth_sim import ClothParams, ClothState, SimConfig, init_cloth, step_quasi_static
from .harness import EpisodeConfig, SuiteConfig, run_benchmark, run_episode
from .planner import PlannerConfig

__version__ = "0.1.0"

__all__ = ["ClothParams", "ClothState", "SimConfig", "init_cloth", "step_quasi_static",
           "EpisodeConfig", "SuiteConfig", "run_benchmark", "run_episode", "PlannerConfig"]
