"""Sampling-based MPC for folding: constrained sampling, place reaching,
rollout costs and the MPPI update, run in a warm-started receding horizon.

Control sequences are ``(L, 3)`` float arrays of end-effector displacements.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .adaptation import predict
from .cloth_sim import SimConfig, clamp_to_table
from .errors import InvalidArgument, NumericalDivergence, PlanningFailure
from .geometry import point_in_hull
from .perception import alignment_iou, extract_point_cloud

log = logging.getLogger(__name__)

_DEFAULT_SIM = SimConfig()


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 12
    n_candidates: int = 100
    temperature: float = 0.01
    sigma: float = 0.01  # per-dimension variance of the sampling Gaussian
    w1: float = 1.0
    w2: float = 0.03
    beta: float = 0.5
    v: float = 0.03
    eps_place: Optional[float] = None  # defaults to v
    max_resample: int = 16

    def __post_init__(self):
        if self.horizon < 1 or self.n_candidates < 1:
            raise InvalidArgument("horizon and n_candidates must be >= 1")
        if not self.temperature > 0.0:
            raise InvalidArgument("temperature must be > 0")
        if not (0.0 < self.beta < 1.0):
            raise InvalidArgument("beta must lie in (0, 1)")
        if not self.v > 0.0:
            raise InvalidArgument("action norm v must be > 0")
        if self.sigma < 0.0:
            raise InvalidArgument("sigma must be >= 0")

    @property
    def place_tol(self):
        return self.v if self.eps_place is None else self.eps_place


@dataclass(eq=False)
class CandidateSet:
    actions: np.ndarray  # (N, L, 3)
    costs: Optional[np.ndarray] = None
    diverged: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.actions)


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_candidates(mean, cfg, d_pp, rng):
    """Draw ``cfg.n_candidates`` sequences around ``mean``.

    Each direction is ``mean + noise`` with diagonal variance ``cfg.sigma``; a
    direction with negative cosine similarity to ``d_pp`` is redrawn up to
    ``cfg.max_resample`` times and then reflected across the plane normal to
    ``d_pp``.  Directions are scaled to norm ``cfg.v``.
    """
    rng = _rng(rng)
    mean = np.asarray(mean, dtype=float).reshape(-1, 3)
    d_pp = np.asarray(d_pp, dtype=float)
    norm_pp = np.linalg.norm(d_pp)
    if not norm_pp > 0.0:
        raise InvalidArgument("d_pp must be non-zero")
    u = d_pp / norm_pp
    std = math.sqrt(cfg.sigma)
    n, length = cfg.n_candidates, len(mean)
    if std == 0.0 and np.any(np.linalg.norm(mean, axis=1) == 0.0):
        raise InvalidArgument("zero-variance sampling around a zero action has no direction")

    dirs = mean[None, :, :] + std * rng.standard_normal((n, length, 3))
    for c in range(n):
        for h in range(length):
            d = dirs[c, h]
            tries = 0
            while True:
                norm = np.linalg.norm(d)
                if norm > 0.0 and d @ u >= 0.0:
                    break
                if tries >= cfg.max_resample:
                    if norm == 0.0:
                        raise PlanningFailure("could not draw a non-zero action direction")
                    d = d - 2.0 * (d @ u) * u
                    break
                d = mean[h] + std * rng.standard_normal(3)
                tries += 1
            dirs[c, h] = d
    actions = dirs / np.linalg.norm(dirs, axis=2, keepdims=True) * cfg.v
    return CandidateSet(actions)


def ee_path(seq, x_start, table_height=0.0):
    """End-effector positions ``x_0 .. x_L`` under ``x_{h+1} = x_h + a_h``.

    The gripper is clamped to the table plane exactly as in the simulator.
    """
    out = [np.asarray(x_start, dtype=float)]
    for a in np.asarray(seq, dtype=float).reshape(-1, 3):
        out.append(clamp_to_table(out[-1] + a, table_height))
    return np.array(out)


def extend_to_place(seq, x_start, x_place, cfg, table_height=0.0):
    """Append straight-line steps of norm ``cfg.v`` ending exactly at ``x_place``.

    Nothing is appended when the sequence already ends within ``cfg.place_tol``.
    """
    seq = np.asarray(seq, dtype=float).reshape(-1, 3)
    x_place = np.asarray(x_place, dtype=float)
    end = ee_path(seq, x_start, table_height)[-1]
    gap = x_place - end
    dist = float(np.linalg.norm(gap))
    if dist <= cfg.place_tol:
        return seq.copy()
    k = max(1, math.ceil(dist / cfg.v - 1e-9))
    unit = gap / dist
    steps = [unit * cfg.v for _ in range(k - 1)]
    reached = end + sum(steps, np.zeros(3))
    steps.append(x_place - reached)
    return np.concatenate([seq, np.array(steps)])


def alignment_cost_from_ious(ious, beta):
    """``sum_j beta**(L-j) * (1 - iou_j)`` over ``j = 1..L``.

    Evaluated as ``sum(w) - sum(w * iou)`` with exactly rounded sums, which
    keeps decimal IoUs such as 0.8 from leaving a one-ulp residue.
    """
    ious = np.asarray(ious, dtype=float)
    if ious.size == 0:
        raise InvalidArgument("empty prediction sequence")
    if not (0.0 < beta <= 1.0):
        raise InvalidArgument("beta must lie in (0, 1]")
    L = len(ious)
    weights = beta ** (L - np.arange(1, L + 1))
    return math.fsum(weights) - math.fsum(weights * ious)


def cost_alignment(predicted, bottom_ref, beta):
    """Alignment shortfall of a predicted sequence of clouds against the reference."""
    if len(predicted) == 0:
        raise InvalidArgument("empty prediction sequence")
    return alignment_cost_from_ious([alignment_iou(pc, bottom_ref) for pc in predicted], beta)


def cost_hull(positions, hull):
    """Number of positions whose xy projection falls outside ``hull``."""
    return sum(0 if point_in_hull(hull, p) else 1 for p in positions)


@dataclass
class Rollout:
    cost: float
    c1: float = float("nan")
    c2: float = float("nan")
    ious: list = field(default_factory=list)
    diverged: bool = False


def rollout_cost(candidate, state, z, bottom_ref, hull, cfg, sim_cfg=None, pc=None,
                 observe=None):
    """Roll ``predict`` along an already place-extended candidate.

    Returns ``w1*c1 + w2*c2``; a simulator divergence yields an infinite cost
    with ``diverged`` set instead of raising.
    """
    sim_cfg = sim_cfg or _DEFAULT_SIM
    candidate = np.asarray(candidate, dtype=float).reshape(-1, 3)
    if cfg.w1 == 0.0 and cfg.w2 == 0.0:
        return Rollout(0.0, 0.0, 0.0)
    positions = ee_path(candidate, state.ee_position, sim_cfg.table_height)[1:]
    c2 = float(cost_hull(positions, hull))
    ious = []
    if cfg.w1 != 0.0:
        if pc is None:
            pc = observe(state) if observe is not None else extract_point_cloud(state)
        rs = state
        try:
            for a in candidate:
                pc, rs = predict(pc, None, a, z, rs, sim_cfg, observe)
                ious.append(alignment_iou(pc, bottom_ref))
        except NumericalDivergence as exc:
            log.warning("candidate rollout diverged at substep %d", exc.substep)
            return Rollout(math.inf, math.nan, c2, ious, True)
        c1 = alignment_cost_from_ious(ious, cfg.beta)
    else:
        c1 = 0.0
    return Rollout(cfg.w1 * c1 + cfg.w2 * c2, c1, c2, ious)


def mppi_weights(costs, temperature):
    costs = np.asarray(costs, dtype=float)
    finite = np.isfinite(costs)
    if not finite.any():
        raise PlanningFailure("every candidate has infinite cost")
    shifted = np.where(finite, costs - costs[finite].min(), np.inf)
    w = np.exp(-shifted / temperature)
    return w / w.sum()


def mppi_update(candidates, temperature, v=None):
    """Softmax(-J/lambda)-weighted average of the candidate actions, per step.

    Each averaged action is rescaled to norm ``v`` (the candidates' own norm when
    ``v`` is None).  An average that cancels to zero falls back to the
    best candidate's action at that step.
    """
    w = mppi_weights(candidates.costs, temperature)
    acts = candidates.actions
    avg = np.tensordot(w, acts, axes=(0, 0))
    if v is None:
        v = float(np.linalg.norm(acts[0, 0]))
    norms = np.linalg.norm(avg, axis=1)
    best = int(np.argmax(w))
    out = np.empty_like(avg)
    for h in range(len(avg)):
        if norms[h] > 1e-12:
            out[h] = avg[h] / norms[h] * v
        else:
            out[h] = acts[best, h]
    return out


@dataclass
class PlanResult:
    action: np.ndarray
    warm: np.ndarray
    sequence: np.ndarray
    candidates: CandidateSet
    best: Rollout
    min_cost: float
    mean_cost: float


def plan_step(state, pc, bottom_ref, hull, warm, z, cfg, t, T, rng, x_place, d_pp,
              sim_cfg=None, observe=None):
    """One receding-horizon iteration.

    Samples around the warm start, extends every candidate to the place
    position, scores the rollouts and applies the MPPI update.  Returns the
    first action together with the shifted remainder (tail refilled with a
    fresh zero-mean constrained draw) as the next warm start.
    """
    if t >= T:
        raise InvalidArgument(f"t={t} must be < T={T}")
    rng = _rng(rng)
    sim_cfg = sim_cfg or _DEFAULT_SIM
    horizon = min(cfg.horizon, T - t)
    mean = np.zeros((horizon, 3))
    if warm is not None and len(warm):
        k = min(horizon, len(warm))
        mean[:k] = np.asarray(warm)[:k]
    cands = sample_candidates(mean, cfg, d_pp, rng)
    x0 = state.ee_position
    rollouts = []
    for seq in cands.actions:
        ext = extend_to_place(seq, x0, x_place, cfg, sim_cfg.table_height)
        rollouts.append(rollout_cost(ext, state, z, bottom_ref, hull, cfg, sim_cfg, pc, observe))
    cands.costs = np.array([r.cost for r in rollouts])
    cands.diverged = np.array([r.diverged for r in rollouts])
    seq = mppi_update(cands, cfg.temperature, cfg.v)
    tail = sample_candidates(np.zeros((1, 3)), replace(cfg, n_candidates=1), d_pp, rng).actions[0]
    warm_next = np.concatenate([seq[1:], tail])
    finite = cands.costs[np.isfinite(cands.costs)]
    best = rollouts[int(np.argmin(np.where(np.isfinite(cands.costs), cands.costs, np.inf)))]
    return PlanResult(seq[0].copy(), warm_next, seq, cands, best,
                      float(finite.min()), float(finite.mean()))

