"""Quasi-static mass-spring cloth simulator.

The cloth is an ``n x n`` particle grid joined by structural, shear and
two-hop bending springs.  One particle can be bound to the end-effector; every
action moves the end-effector along a straight segment over a fixed number of
substeps and then lets the cloth relax until it is (approximately) at rest.
Integration is damped semi-implicit Euler with a Coulomb-like friction cap on
particles touching the table.

Stepping is a pure function of its inputs: states are never mutated in place,
so independent rollouts can be evaluated freely from the same parent state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from numba import njit

from .errors import InvalidArgument, InvalidState, NoGraspableParticle, NumericalDivergence

BOTTOM = 0
UPPER = 1
LABEL_NAMES = {BOTTOM: "bottom", UPPER: "upper"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}

PARAM_MIN = 20.0
PARAM_MAX = 100.0


@dataclass(frozen=True)
class ClothParams:
    """Physical property vector of a cloth.

    ``stiffness`` drives the in-plane (structural and shear) springs and
    ``elasticity`` the two-hop bending springs.  Both are opaque scale values
    on ``[20, 100]``; the mapping to spring constants lives in ``SimConfig``.
    """

    stiffness: float = 60.0
    elasticity: float = 40.0
    friction: float = 4.0

    def __post_init__(self):
        for name in ("stiffness", "elasticity"):
            value = getattr(self, name)
            if not (PARAM_MIN <= value <= PARAM_MAX):
                raise InvalidArgument(f"{name}={value} outside [{PARAM_MIN}, {PARAM_MAX}]")
        if not (self.friction >= 0.0 and math.isfinite(self.friction)):
            raise InvalidArgument(f"friction must be >= 0, got {self.friction}")


@dataclass(frozen=True)
class SimConfig:
    """Integration and contact settings.

    ``stiffness_scale`` and ``bend_scale`` map the opaque parameter scale onto
    spring constants (N/m).  They were calibrated once so that the default
    cloth folded by the fixed triangular trajectory ends with a final IoU in
    the 0.3-0.6 range; see ``clothfold calibrate``.
    """

    substeps_per_action: int = 20
    damping: float = 0.02
    settle_velocity_tol: float = 5e-3
    max_settle_iters: int = 200
    gravity: float = 9.81
    table_height: float = 0.0
    contact_tol: float = 1e-3
    areal_density: float = 0.1  # kg/m^2
    stiffness_scale: float = 0.05
    shear_ratio: float = 0.5
    bend_scale: float = 0.005
    safety_factor: float = 0.5
    max_displacement: float = 0.06  # sanity bound per action: twice the action norm

    def __post_init__(self):
        if self.substeps_per_action < 1 or self.max_settle_iters < 0:
            raise InvalidArgument("substep and settle counts must be positive")
        if not (0.0 < self.damping < 1.0):
            raise InvalidArgument(f"damping must lie in (0, 1), got {self.damping}")
        for name in ("settle_velocity_tol", "contact_tol", "areal_density",
                     "stiffness_scale", "bend_scale", "safety_factor",
                     "max_displacement"):
            if not getattr(self, name) > 0.0:
                raise InvalidArgument(f"{name} must be strictly positive")
        if self.gravity < 0.0:
            raise InvalidArgument("gravity magnitude must be non-negative")


@dataclass(frozen=True, eq=False)
class ClothState:
    positions: np.ndarray  # (n*n, 3), row-major over (row, col)
    velocities: np.ndarray
    resolution: int
    rest_spacing: float
    half_label: np.ndarray  # (n*n,) uint8, UPPER or BOTTOM
    grasped_index: Optional[int] = None
    capped: bool = False  # last relaxation hit max_settle_iters
    fold_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0]))

    def __post_init__(self):
        n = self.resolution
        if n < 2:
            raise InvalidArgument("resolution must be >= 2")
        if self.positions.shape != (n * n, 3) or self.velocities.shape != (n * n, 3):
            raise InvalidArgument("positions/velocities must have shape (n*n, 3)")

    @property
    def n_particles(self):
        return self.resolution * self.resolution

    @property
    def ee_position(self):
        if self.grasped_index is None:
            return None
        return self.positions[self.grasped_index].copy()

    def copy(self):
        return replace(self, positions=self.positions.copy(), velocities=self.velocities.copy())


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def init_cloth(side_length=0.20, resolution=13, params=None, pose=(0.0, 0.0, 0.0),
               cfg=None):
    """Flat square cloth lying on the table.

    ``pose`` is ``(theta, tx, ty)``: a rotation about the vertical axis followed
    by a translation of the cloth center.  In the cloth's local frame the fold
    runs along local -y: rows with local y above the midline form the Upper half
    (midline row included), the rest the Bottom half.
    """
    if not side_length > 0.0:
        raise InvalidArgument(f"side_length must be > 0, got {side_length}")
    if int(resolution) != resolution or resolution < 2:
        raise InvalidArgument(f"resolution must be an integer >= 2, got {resolution}")
    cfg = cfg or SimConfig()
    n = int(resolution)
    spacing = side_length / (n - 1)
    theta, tx, ty = pose
    rot = _rotation(theta)

    coords = (np.arange(n) - (n - 1) / 2.0) * spacing
    # row index walks local y, column index local x
    ly, lx = np.meshgrid(coords, coords, indexing="ij")
    local = np.stack([lx.ravel(), ly.ravel()], axis=1)
    xy = local @ rot.T + np.array([tx, ty])
    positions = np.zeros((n * n, 3))
    positions[:, :2] = xy
    positions[:, 2] = cfg.table_height

    rows = np.repeat(np.arange(n), n)
    labels = np.where(2 * rows >= n - 1, UPPER, BOTTOM).astype(np.uint8)
    fold_axis = rot @ np.array([0.0, -1.0])
    return ClothState(positions=positions, velocities=np.zeros_like(positions),
                      resolution=n, rest_spacing=spacing, half_label=labels,
                      fold_axis=fold_axis)


def corner_index(resolution, corner):
    """Linear particle index of a named local corner ('top-left', ...)."""
    n = resolution
    row = {"top": n - 1, "bottom": 0}[corner.split("-")[0]]
    col = {"left": 0, "right": n - 1}[corner.split("-")[1]]
    return row * n + col


def grasp(state, pick):
    """Bind the particle nearest ``pick`` to the end-effector.

    Ties go to the lowest linear index.  The particle keeps its position,
    which becomes the end-effector position.
    """
    if state.grasped_index is not None:
        raise InvalidState("cloth is already grasped")
    pick = np.asarray(pick, dtype=float)
    dist = np.linalg.norm(state.positions - pick, axis=1)
    idx = int(np.argmin(dist))  # argmin returns the first minimum
    if dist[idx] > state.rest_spacing:
        raise NoGraspableParticle(
            f"nearest particle is {dist[idx]:.4f} m from pick, beyond rest spacing "
            f"{state.rest_spacing:.4f} m")
    new = state.copy()
    new.velocities[idx] = 0.0
    return replace(new, grasped_index=idx)


def release(state):
    return replace(state.copy(), grasped_index=None)


@lru_cache(maxsize=16)
def _topology(n):
    """Spring endpoints and their kind: 0 structural, 1 shear, 2 bending."""
    def idx(r, c):
        return r * n + c

    i, j, kind, hops = [], [], [], []
    for r in range(n):
        for c in range(n):
            for dr, dc, kd, h in ((0, 1, 0, 1.0), (1, 0, 0, 1.0),
                                  (1, 1, 1, math.sqrt(2.0)), (1, -1, 1, math.sqrt(2.0)),
                                  (0, 2, 2, 2.0), (2, 0, 2, 2.0)):
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < n and 0 <= c2 < n:
                    i.append(idx(r, c))
                    j.append(idx(r2, c2))
                    kind.append(kd)
                    hops.append(h)
    return (np.array(i, dtype=np.int64), np.array(j, dtype=np.int64),
            np.array(kind, dtype=np.int64), np.array(hops))


def spring_constants(params, cfg):
    k_struct = cfg.stiffness_scale * params.stiffness
    return np.array([k_struct, k_struct * cfg.shear_ratio, cfg.bend_scale * params.elasticity])


def particle_mass(side_length, n, cfg):
    return cfg.areal_density * side_length * side_length / (n * n)


def stable_dt(n, side_length, cfg):
    """Time step meeting ``dt < 2/omega_max`` with the configured safety factor.

    ``omega_max`` is bounded with Gershgorin's theorem for the stiffest cloth in
    the parameter range, so every parameter choice shares one step size and
    rollouts under different candidate parameters stay comparable.
    """
    stiffest = ClothParams(stiffness=PARAM_MAX, elasticity=PARAM_MAX)
    k = spring_constants(stiffest, cfg)
    per_particle = 4 * k[0] + 4 * k[1] + 4 * k[2]
    omega_max = math.sqrt(2.0 * per_particle / particle_mass(side_length, n, cfg))
    return cfg.safety_factor * 2.0 / omega_max


@njit(cache=True, fastmath=True)
def _relax(x, v, si, sj, rest, ks, grasped, ee_from, ee_to, n_move, max_settle,
           dt, damping, mass, g, table_z, contact_tol, mu, settle_tol):
    """Advance in place. Returns (iterations, converged, bad_substep or -1)."""
    n_p = x.shape[0]
    f = np.zeros((n_p, 3))
    keep = 1.0 - damping
    total = n_move + max_settle
    it = 0
    converged = False
    while it < total:
        if grasped >= 0:
            if it < n_move - 1:
                s = (it + 1.0) / n_move
                for d in range(3):
                    x[grasped, d] = ee_from[d] + s * (ee_to[d] - ee_from[d])
            else:
                for d in range(3):
                    x[grasped, d] = ee_to[d]
        for p in range(n_p):
            f[p, 0] = 0.0
            f[p, 1] = 0.0
            f[p, 2] = -mass * g
        for e in range(si.shape[0]):
            a = si[e]
            b = sj[e]
            dx = x[b, 0] - x[a, 0]
            dy = x[b, 1] - x[a, 1]
            dz = x[b, 2] - x[a, 2]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            if length > 1e-12:
                m = ks[e] * (length - rest[e]) / length
                f[a, 0] += m * dx
                f[a, 1] += m * dy
                f[a, 2] += m * dz
                f[b, 0] -= m * dx
                f[b, 1] -= m * dy
                f[b, 2] -= m * dz
        vmax2 = 0.0
        stop = mu * dt * g
        for p in range(n_p):
            if p == grasped:
                v[p, 0] = 0.0
                v[p, 1] = 0.0
                v[p, 2] = 0.0
                continue
            vx = (v[p, 0] + dt * f[p, 0] / mass) * keep
            vy = (v[p, 1] + dt * f[p, 1] / mass) * keep
            vz = (v[p, 2] + dt * f[p, 2] / mass) * keep
            if x[p, 2] <= table_z + contact_tol:
                if vz < 0.0:
                    vz = 0.0
                vt = math.sqrt(vx * vx + vy * vy)
                if vt > 0.0:
                    scale = 1.0 - stop / vt
                    if scale < 0.0:
                        scale = 0.0
                    vx *= scale
                    vy *= scale
            x[p, 0] += dt * vx
            x[p, 1] += dt * vy
            x[p, 2] += dt * vz
            if x[p, 2] < table_z:
                x[p, 2] = table_z
                if vz < 0.0:
                    vz = 0.0
            v[p, 0] = vx
            v[p, 1] = vy
            v[p, 2] = vz
            sp2 = vx * vx + vy * vy + vz * vz
            if not (sp2 < 1e300 and x[p, 0] == x[p, 0] and x[p, 1] == x[p, 1]
                    and x[p, 2] == x[p, 2]):
                return it + 1, False, it
            if sp2 > vmax2:
                vmax2 = sp2
        it += 1
        if it >= n_move and vmax2 < settle_tol * settle_tol:
            converged = True
            break
    return it, converged, -1


class _Model:
    """Per-(resolution, size, params, cfg) arrays handed to the kernel."""

    __slots__ = ("si", "sj", "rest", "ks", "mass", "dt")

    def __init__(self, n, spacing, params, cfg):
        si, sj, kind, hops = _topology(n)
        self.si, self.sj = si, sj
        self.rest = hops * spacing
        self.ks = spring_constants(params, cfg)[kind]
        side = spacing * (n - 1)
        self.mass = particle_mass(side, n, cfg)
        self.dt = stable_dt(n, side, cfg)


@lru_cache(maxsize=256)
def _model(n, spacing, params, cfg):
    return _Model(n, spacing, params, cfg)


def clamp_to_table(point, table_height=0.0):
    """End-effector kinematics: the gripper cannot go below the table plane."""
    p = np.array(point, dtype=float)
    if p[2] < table_height:
        p[2] = table_height
    return p


def _advance(state, ee_target, n_move, max_settle, params, cfg):
    m = _model(state.resolution, state.rest_spacing, params, cfg)
    x = state.positions.copy()
    v = state.velocities.copy()
    grasped = -1 if state.grasped_index is None else state.grasped_index
    ee_from = x[grasped].copy() if grasped >= 0 else np.zeros(3)
    ee_to = ee_target if grasped >= 0 else np.zeros(3)
    _, converged, bad = _relax(x, v, m.si, m.sj, m.rest, m.ks, grasped, ee_from, ee_to,
                               n_move, max_settle, m.dt, cfg.damping, m.mass, cfg.gravity,
                               cfg.table_height, cfg.contact_tol, params.friction,
                               cfg.settle_velocity_tol)
    if bad >= 0:
        raise NumericalDivergence(bad)
    return replace(state, positions=x, velocities=v, capped=not converged)


def step_quasi_static(state, ee_displacement, params, cfg=None):
    """Move the end-effector by ``ee_displacement`` and relax the cloth.

    The commanded target is clamped to the table plane.  The returned state's
    ``capped`` flag is set when relaxation stopped at ``max_settle_iters``
    instead of the velocity tolerance.
    """
    cfg = cfg or SimConfig()
    if state.grasped_index is None:
        raise InvalidState("step_quasi_static requires a grasped cloth")
    disp = np.asarray(ee_displacement, dtype=float)
    if disp.shape != (3,) or not np.all(np.isfinite(disp)):
        raise InvalidArgument("ee_displacement must be a finite 3-vector")
    if np.linalg.norm(disp) > cfg.max_displacement:
        raise InvalidArgument(
            f"displacement of {np.linalg.norm(disp):.4f} m exceeds {cfg.max_displacement} m")
    target = clamp_to_table(state.positions[state.grasped_index] + disp, cfg.table_height)
    return _advance(state, target, cfg.substeps_per_action, cfg.max_settle_iters, params, cfg)


def settle(state, params, cfg=None):
    """Relax without moving the end-effector; a converged state maps to itself."""
    cfg = cfg or SimConfig()
    if not state.capped and max_speed(state) < cfg.settle_velocity_tol:
        return state.copy()
    target = state.positions[state.grasped_index].copy() if state.grasped_index is not None else None
    return _advance(state, target, 1, cfg.max_settle_iters, params, cfg)


def max_speed(state):
    return float(np.sqrt(np.max(np.sum(state.velocities ** 2, axis=1))))


def export_csv(state, path):
    """Write ``index,label,x,y,z`` rows (meters)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", "x", "y", "z"])
        for i, (p, lab) in enumerate(zip(state.positions, state.half_label)):
            w.writerow([i, LABEL_NAMES[int(lab)], repr(float(p[0])), repr(float(p[1])),
                        repr(float(p[2]))])
