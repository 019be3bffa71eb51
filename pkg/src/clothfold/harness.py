"""Episode orchestration, baseline policies and the benchmark runner."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .adaptation import (HistoryWindow, Observation, ParamGrid, estimate_params,
                         prior_estimate, update_history)
from .cloth_sim import (BOTTOM, ClothParams, SimConfig, corner_index, grasp, init_cloth,
                        step_quasi_static)
from .errors import ClothFoldError, InfeasibleConfig, InvalidArgument, NumericalDivergence
from .geometry import convex_hull_2d
from .perception import Perception, alignment_iou
from .planner import PlannerConfig, extend_to_place, plan_step, sample_candidates

log = logging.getLogger(__name__)

POLICIES = ("AdaFold", "AdaFoldOL", "Triangular", "Random")

STEP_COLUMNS = ["t", "phase", "ax", "ay", "az", "ee_x", "ee_y", "ee_z", "min_cost",
                "mean_cost", "c1", "c2", "iou", "z_stiffness", "z_elasticity", "residual"]


@dataclass(frozen=True)
class EpisodeConfig:
    policy: str = "AdaFold"
    seed: int = 0
    T: int = 12
    side_length: float = 0.20
    resolution: int = 13
    pose: tuple = (0.0, 0.0, 0.0)
    params: ClothParams = ClothParams()
    pick: Optional[tuple] = None  # default: top-left corner of the cloth
    place: Optional[tuple] = None  # default: bottom-left corner
    planner: PlannerConfig = PlannerConfig()
    sim: SimConfig = SimConfig()
    grid: ParamGrid = ParamGrid()
    history: int = 3  # K past observations
    predict_steps: int = 3  # M future predictions in the fit loss
    subdivisions: int = 3
    voxel: float = 0.008
    cell: float = 0.01

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise InvalidArgument(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.T < 0:
            raise InvalidArgument("T must be >= 0")
        if self.pick is not None and self.place is not None and \
                np.allclose(self.pick, self.place):
            raise InvalidArgument("pick and place coincide")


@dataclass
class EpisodeResult:
    config: EpisodeConfig
    rows: list = field(default_factory=list)
    final_iou: float = 0.0
    wall_seconds: float = 0.0
    estimates: list = field(default_factory=list)
    failed: bool = False
    error: str = ""
    ee_path: list = field(default_factory=list)
    bottom_slip: float = 0.0  # max horizontal Bottom-particle displacement, meters
    snapshots: list = field(default_factory=list)  # particle positions per step
    labels: Optional[np.ndarray] = None


def default_pick_place(state):
    """Top-left corner folded onto the bottom-left corner, across the midline."""
    n = state.resolution
    pick = state.positions[corner_index(n, "top-left")].copy()
    place = state.positions[corner_index(n, "bottom-left")].copy()
    return pick, place


def baseline_triangular(pick, place, T, v):
    """Pick -> apex -> place, apex above the midpoint at half the pick-place distance.

    The path is cut into ``T`` pieces of equal arc length; each step is the chord
    between consecutive cut points, so no step exceeds the arc length.
    """
    pick = np.asarray(pick, dtype=float)
    place = np.asarray(place, dtype=float)
    span = float(np.linalg.norm(place - pick))
    if span == 0.0:
        raise InfeasibleConfig("pick and place coincide")
    if T < 1:
        raise InfeasibleConfig("triangular trajectory needs T >= 1")
    apex = 0.5 * (pick + place)
    apex[2] += 0.5 * span
    leg1 = float(np.linalg.norm(apex - pick))
    leg2 = float(np.linalg.norm(place - apex))
    total = leg1 + leg2
    if total / T > v * (1 + 1e-12):
        raise InfeasibleConfig(
            f"path of {total:.3f} m cannot be covered in {T} steps of norm <= {v}")

    def at(s):
        if s <= leg1:
            return pick + (apex - pick) * (s / leg1)
        return apex + (place - apex) * ((s - leg1) / leg2)

    waypoints = [at(total * k / T) for k in range(T)] + [place]
    return np.diff(np.array(waypoints), axis=0)


def random_action(horizon, cfg, d_pp, rng):
    cands = sample_candidates(np.zeros((horizon, 3)), cfg, d_pp, rng)
    return cands.actions[int(rng.integers(len(cands)))][0]


def run_episode(cfg, snapshot=False):
    """Run one folding episode and return its log and final IoU."""
    start = time.perf_counter()
    result = EpisodeResult(cfg)
    sim, pcfg = cfg.sim, cfg.planner
    state = init_cloth(cfg.side_length, cfg.resolution, cfg.params, cfg.pose, sim)
    perception = Perception(cfg.subdivisions, cfg.voxel, cfg.cell)
    pc = perception.observe(state)
    ref = perception.freeze_bottom_reference(pc)
    hull = convex_hull_2d(state.positions[:, :2])
    bottom0 = state.positions[state.half_label == BOTTOM, :2].copy()

    result.labels = state.half_label.copy()
    pick, place = default_pick_place(state)
    if cfg.pick is not None:
        pick = np.asarray(cfg.pick, dtype=float)
    if cfg.place is not None:
        place = np.asarray(cfg.place, dtype=float)

    if cfg.T == 0:
        result.final_iou = alignment_iou(pc, ref)
        result.wall_seconds = time.perf_counter() - start
        return result

    state = grasp(state, pick)
    d_pp = place - pick
    rng = np.random.default_rng(cfg.seed)
    window = update_history(HistoryWindow(cfg.history),
                            Observation(0, state, pc, state.ee_position, None))
    z = prior_estimate(cfg.params.friction, cfg.grid)
    result.ee_path.append(state.ee_position)
    if snapshot:
        result.snapshots.append(state.positions.copy())

    if cfg.policy == "Triangular":
        scripted = list(baseline_triangular(state.ee_position, place, cfg.T, pcfg.v))
    else:
        scripted = None
    warm = None
    t = 0

    def execute(action, phase, info):
        nonlocal state, pc, window
        before = state.ee_position
        state = step_quasi_static(state, action, cfg.params, sim)
        pc = perception.observe(state)
        disp = state.ee_position - before
        window = update_history(window, Observation(len(result.rows) + 1, state, pc,
                                                    state.ee_position, disp))
        ee = state.ee_position
        result.ee_path.append(ee)
        if snapshot:
            result.snapshots.append(state.positions.copy())
        result.rows.append([len(result.rows), phase, *disp.tolist(), *ee.tolist(),
                            info.get("min_cost"), info.get("mean_cost"), info.get("c1"),
                            info.get("c2"), alignment_iou(pc, ref),
                            z.params.stiffness, z.params.elasticity, z.residual])

    try:
        while t < cfg.T:
            info = {}
            if cfg.policy == "AdaFold":
                if len(window) >= 2:
                    z = estimate_params(window, cfg.grid, cfg.predict_steps, sim, previous=z)
                result.estimates.append((t, z.params.stiffness, z.params.elasticity, z.residual))
                plan = plan_step(state, pc, ref, hull, warm, z, pcfg, t, cfg.T, rng, place,
                                 d_pp, sim, perception.observe)
                warm = plan.warm
                action = plan.action
                info = dict(min_cost=plan.min_cost, mean_cost=plan.mean_cost,
                            c1=plan.best.c1, c2=plan.best.c2)
            elif cfg.policy == "AdaFoldOL":
                if scripted is None:
                    result.estimates.append((t, z.params.stiffness, z.params.elasticity, z.residual))
                    plan = plan_step(state, pc, ref, hull, None, z, pcfg, t, cfg.T, rng, place,
                                     d_pp, sim, perception.observe)
                    scripted = list(plan.sequence)
                    info = dict(min_cost=plan.min_cost, mean_cost=plan.mean_cost,
                                c1=plan.best.c1, c2=plan.best.c2)
                if t >= len(scripted):
                    break
                action = scripted[t]
            elif cfg.policy == "Triangular":
                action = scripted[t]
            else:
                action = random_action(min(pcfg.horizon, cfg.T - t), pcfg, d_pp, rng)
            execute(action, "plan", info)
            t += 1
        for action in extend_to_place(np.zeros((0, 3)), state.ee_position, place, pcfg,
                                      sim.table_height):
            execute(action, "extend", {})
    except NumericalDivergence as exc:
        log.error("episode diverged: %s", exc)
        result.failed = True
        result.error = str(exc)

    result.final_iou = alignment_iou(pc, ref)
    slip = state.positions[state.half_label == BOTTOM, :2] - bottom0
    result.bottom_slip = float(np.max(np.linalg.norm(slip, axis=1)))
    result.wall_seconds = time.perf_counter() - start
    return result


# --- benchmark ---------------------------------------------------------------

@dataclass(frozen=True)
class SuiteConfig:
    policies: tuple = ("AdaFold", "Triangular")
    seeds: tuple = tuple(range(20))
    cloths: str = "default"  # or "randomized"
    n_cloths: int = 10
    cloth_seed: int = 0
    horizons: tuple = ()  # extra AdaFold horizons for the ablation sweep
    include_failed: bool = False
    workers: int = 1
    base: EpisodeConfig = EpisodeConfig()

    def __post_init__(self):
        unknown = [p for p in self.policies if p not in POLICIES]
        if unknown or not self.policies:
            raise InvalidArgument(f"policies must be a non-empty subset of {POLICIES}")
        if not self.seeds:
            raise InvalidArgument("suite needs at least one seed")
        if self.cloths not in ("default", "randomized"):
            raise InvalidArgument(f"unknown cloth protocol {self.cloths!r}")
        if self.n_cloths < 1 or self.workers < 1:
            raise InvalidArgument("n_cloths and workers must be >= 1")
        if any(h < 1 for h in self.horizons):
            raise InvalidArgument("ablation horizons must be >= 1")


def randomized_params(n, seed, friction):
    rng = np.random.default_rng(seed)
    draws = rng.uniform(20.0, 100.0, size=(n, 2))
    return [ClothParams(float(s), float(e), friction) for s, e in draws]


def suite_cells(suite):
    """Every (label, horizon, cloth_id, EpisodeConfig) the suite will run, in order."""
    base = suite.base
    if suite.cloths == "default":
        cloths = [("default", base.params)]
    else:
        cloths = [(f"rand{i}", p) for i, p in
                  enumerate(randomized_params(suite.n_cloths, suite.cloth_seed,
                                              base.params.friction))]
    runs = [(p, base.planner.horizon) for p in suite.policies]
    runs += [("AdaFold", h) for h in suite.horizons if ("AdaFold", h) not in runs]
    cells = []
    for policy, horizon in runs:
        for cloth_id, params in cloths:
            for seed in suite.seeds:
                cfg = replace(base, policy=policy, seed=int(seed), params=params,
                              planner=replace(base.planner, horizon=int(horizon)))
                cells.append((policy, horizon, cloth_id, cfg))
    return cells


RESULT_COLUMNS = ["policy", "horizon", "cloth", "stiffness", "elasticity", "seed",
                  "final_iou", "failed", "steps", "bottom_slip"]
SUMMARY_COLUMNS = ["policy", "horizon", "cloth", "n", "mean_iou", "std_iou"]


def _run_cell(cfg):
    try:
        return run_episode(cfg)
    except ClothFoldError as exc:  # configuration-level failure of a single cell
        res = EpisodeResult(cfg, failed=True, error=str(exc))
        return res


def run_benchmark(suite, on_result=None):
    """Run every suite cell; returns ``(results_rows, summary_rows, episodes)``."""
    cells = suite_cells(suite)
    configs = [c[3] for c in cells]
    if suite.workers > 1:
        with ProcessPoolExecutor(suite.workers) as pool:
            episodes = list(pool.map(_run_cell, configs))
    else:
        episodes = []
        for cfg in configs:
            episodes.append(_run_cell(cfg))
            if on_result:
                on_result(episodes[-1])

    rows = []
    for (policy, horizon, cloth_id, cfg), ep in zip(cells, episodes):
        rows.append([policy, horizon, cloth_id, cfg.params.stiffness, cfg.params.elasticity,
                     cfg.seed, ep.final_iou, int(ep.failed), len(ep.rows), ep.bottom_slip])
    return rows, summarize(rows, suite.include_failed), episodes


def summarize(rows, include_failed=False):
    groups = {}
    for r in rows:
        if r[7] and not include_failed:
            continue
        groups.setdefault((r[0], r[1], r[2]), []).append(r[6])
        groups.setdefault((r[0], r[1], "all"), [])
    cloth_ids = {r[2] for r in rows}
    out = []
    for (policy, horizon, cloth), vals in groups.items():
        if cloth == "all":
            if len(cloth_ids) < 2:
                continue
            vals = [r[6] for r in rows if r[0] == policy and r[1] == horizon
                    and (include_failed or not r[7])]
        arr = np.array(vals, dtype=float)
        mean = float(arr.mean()) if len(arr) else float("nan")
        std = float(arr.std()) if len(arr) else float("nan")
        out.append([policy, horizon, cloth, len(arr), mean, std])
    return out
