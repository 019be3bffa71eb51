"""Online estimation of cloth parameters from a short observation history.

The estimator is an exhaustive search over a stiffness x elasticity grid: each
candidate is scored by replaying the recorded end-effector displacements
through the simulator and measuring the multi-step squared prediction error of
the Upper particles.  ``predict`` is the forward model used by the planner: the
simulator stepped under the current estimate, with the Bottom half held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cloth_sim import UPPER, ClothParams, SimConfig, step_quasi_static
from .errors import InsufficientHistory, InvalidArgument
from .perception import LabeledPointCloud, extract_point_cloud

DEFAULT_GRID_VALUES = (20.0, 40.0, 60.0, 80.0, 100.0)


@dataclass(frozen=True, eq=False)
class Observation:
    """One history entry.

    ``action`` is the end-effector displacement that produced this observation
    from the previous one (``None`` for the first entry of an episode).
    """

    t: int
    state: object
    cloud: Optional[LabeledPointCloud]
    ee: np.ndarray
    action: Optional[np.ndarray] = None


@dataclass(frozen=True)
class HistoryWindow:
    K: int = 3
    entries: tuple = ()

    def __len__(self):
        return len(self.entries)


def update_history(w, obs):
    if w.entries and obs.t <= w.entries[-1].t:
        raise InvalidArgument(
            f"observation at t={obs.t} is not after the last entry t={w.entries[-1].t}")
    return replace(w, entries=(w.entries + (obs,))[-w.K:])


@dataclass(frozen=True)
class ParamGrid:
    stiffness: tuple = DEFAULT_GRID_VALUES
    elasticity: tuple = DEFAULT_GRID_VALUES

    def __post_init__(self):
        for values in (self.stiffness, self.elasticity):
            if list(values) != sorted(values) or not values:
                raise InvalidArgument("grid values must be non-empty and sorted")
            if values[0] < 20.0 or values[-1] > 100.0:
                raise InvalidArgument("grid values must lie in [20, 100]")

    def candidates(self):
        return [(s, e) for s in self.stiffness for e in self.elasticity]

    @property
    def midpoint(self):
        return (self.stiffness[len(self.stiffness) // 2], self.elasticity[len(self.elasticity) // 2])


@dataclass(frozen=True)
class LatentParams:
    params: ClothParams
    residual: float = 0.0
    losses: dict = field(default_factory=dict, compare=False, repr=False)


def prior_estimate(friction, grid=None):
    s, e = (grid or ParamGrid()).midpoint
    return LatentParams(ClothParams(s, e, friction), float("nan"))


def multi_step_loss(candidate, w, M=3, cfg=None):
    """Mean over the replayed steps of half the squared Upper-particle error.

    Rolls the oldest window state forward under ``candidate`` with the recorded
    actions.  Only ``min(M, len(w) - 1)`` future steps are available.
    """
    if M < 1:
        raise InvalidArgument("M must be >= 1")
    if len(w) < 2:
        raise InsufficientHistory(f"need at least 2 observations, have {len(w)}")
    cfg = cfg or SimConfig()
    entries = w.entries
    state = entries[0].state
    upper = state.half_label == UPPER
    steps = min(M, len(entries) - 1)
    total = 0.0
    for m in range(1, steps + 1):
        state = step_quasi_static(state, entries[m].action, candidate, cfg)
        diff = state.positions[upper] - entries[m].state.positions[upper]
        total += 0.5 * float(np.sum(diff * diff))
    return total / steps


def estimate_params(w, grid=None, M=3, cfg=None, previous=None, friction=None):
    """Grid point minimizing ``multi_step_loss``.

    Exact ties go to the grid point nearest ``previous``, then the lowest
    stiffness, then the lowest elasticity.  Friction is not estimated; it is
    carried over from ``previous`` (or ``friction``).
    """
    grid = grid or ParamGrid()
    if len(w) < 2:
        raise InsufficientHistory(f"need at least 2 observations, have {len(w)}")
    if friction is None:
        friction = previous.params.friction if previous is not None else ClothParams().friction
    prev = (previous.params.stiffness, previous.params.elasticity) if previous else grid.midpoint

    losses = {}
    for s, e in grid.candidates():
        losses[(s, e)] = multi_step_loss(ClothParams(s, e, friction), w, M, cfg)

    def rank(key):
        dist = (key[0] - prev[0]) ** 2 + (key[1] - prev[1]) ** 2
        return (losses[key], dist, key[0], key[1])

    best = min(losses, key=rank)
    return LatentParams(ClothParams(best[0], best[1], friction), losses[best], losses)


def predict(pc, x, a, z, rollout_state, cfg=None, observe=None):
    """One forward-model step under the estimate ``z``.

    Returns the predicted cloud (Upper points from the stepped simulator, Bottom
    points copied from ``pc``) and the stepped state.  ``observe`` maps a state
    to a cloud; by default one point per particle.
    """
    cfg = cfg or SimConfig()
    if x is not None and rollout_state.grasped_index is not None:
        if not np.allclose(rollout_state.positions[rollout_state.grasped_index], x, atol=1e-9):
            raise InvalidArgument("end-effector position disagrees with the rollout state")
    nxt = step_quasi_static(rollout_state, a, z.params, cfg)
    fresh = observe(nxt) if observe is not None else extract_point_cloud(nxt)
    keep = pc.labels != UPPER
    up = fresh.labels == UPPER
    points = np.concatenate([pc.points[keep], fresh.points[up]])
    labels = np.concatenate([pc.labels[keep], fresh.labels[up]])
    return LabeledPointCloud(points, labels), nxt
