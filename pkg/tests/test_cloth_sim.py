import csv
import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clothfold.cloth_sim import (BOTTOM, UPPER, ClothParams, SimConfig, corner_index,
                                 export_csv, grasp, init_cloth, max_speed, release, settle,
                                 stable_dt, step_quasi_static)
from clothfold.errors import (InvalidArgument, InvalidState, NoGraspableParticle,
                              NumericalDivergence)
from helpers import fold_actions

CFG = SimConfig()


def pairwise(points):
    return np.array([np.linalg.norm(a - b) for a, b in combinations(points, 2)])


# -- parameters and config ---------------------------------------------------

@pytest.mark.parametrize("kw", [dict(stiffness=19.9), dict(stiffness=100.5),
                                dict(elasticity=10.0), dict(friction=-0.1),
                                dict(friction=float("inf"))])
def test_cloth_params_reject_out_of_range(kw):
    with pytest.raises(InvalidArgument):
        ClothParams(**kw)


def test_cloth_params_range_edges_accepted():
    ClothParams(20.0, 100.0, 0.0)


@pytest.mark.parametrize("kw", [dict(damping=0.0), dict(damping=1.0), dict(settle_velocity_tol=0),
                                dict(contact_tol=-1e-3), dict(substeps_per_action=0)])
def test_sim_config_validation(kw):
    with pytest.raises(InvalidArgument):
        SimConfig(**kw)


def test_stable_dt_below_oscillation_bound():
    # the stiffest spring pair alone already bounds dt below 2 / omega
    dt = stable_dt(13, 0.2, CFG)
    assert 0 < dt < 1e-3


# -- init_cloth ---------------------------------------------------------------

def test_init_default_grid(flat):
    # 20 cm square at 13 particles per side
    assert flat.positions.shape == (169, 3)
    assert flat.rest_spacing == pytest.approx(0.2 / 12)
    assert flat.rest_spacing == pytest.approx(0.016667, abs=1e-6)
    span = flat.positions.max(axis=0) - flat.positions.min(axis=0)
    assert span[:2] == pytest.approx([0.2, 0.2], abs=1e-12)
    assert np.all(flat.positions[:, 2] == 0.0)
    assert np.all(flat.velocities == 0.0)


def test_init_minimal_grid():
    s = init_cloth(0.2, 2)
    assert len(s.positions) == 4
    assert sorted(map(tuple, np.round(s.positions[:, :2], 12))) == [
        (-0.1, -0.1), (-0.1, 0.1), (0.1, -0.1), (0.1, 0.1)]


def test_init_rotation_keeps_rest_distances():
    a = init_cloth(0.2, 13)
    b = init_cloth(0.2, 13, pose=(math.pi / 4, 0.0, 0.0))
    np.testing.assert_allclose(pairwise(b.positions[::7]), pairwise(a.positions[::7]),
                               atol=1e-12)


@pytest.mark.parametrize("args", [(0.0, 13), (-0.2, 13), (0.2, 1), (0.2, 0), (0.2, 2.5)])
def test_init_rejects_bad_size(args):
    with pytest.raises(InvalidArgument):
        init_cloth(*args)


@pytest.mark.parametrize("n", [2, 3, 4, 13, 14])
def test_half_labels_partition(n):
    s = init_cloth(0.2, n)
    up = s.half_label == UPPER
    assert up.any() and (~up).any()
    assert set(np.unique(s.half_label)) == {UPPER, BOTTOM}
    # Upper is the half that contains the top-left corner, split by rows
    rows = np.arange(n * n) // n
    assert np.array_equal(up, 2 * rows >= n - 1)
    assert s.half_label[corner_index(n, "top-left")] == UPPER
    assert s.half_label[corner_index(n, "bottom-left")] == BOTTOM


# -- grasp --------------------------------------------------------------------

def test_grasp_corner(flat):
    i = corner_index(13, "top-left")
    g = grasp(flat, flat.positions[i])
    assert g.grasped_index == i
    assert flat.grasped_index is None  # input untouched


def test_grasp_tie_goes_to_lower_index(flat):
    mid = 0.5 * (flat.positions[5] + flat.positions[6])
    assert grasp(flat, mid).grasped_index == 5


def test_grasp_out_of_reach(flat):
    with pytest.raises(NoGraspableParticle):
        grasp(flat, [1.0, 0.0, 0.0])


def test_grasp_twice(grasped):
    with pytest.raises(InvalidState):
        grasp(grasped, grasped.ee_position)


def test_step_requires_grasp(flat, params):
    with pytest.raises(InvalidState):
        step_quasi_static(flat, [0, 0, 0.01], params)


@pytest.mark.parametrize("disp", [[0.1, 0, 0], [np.nan, 0, 0], [0, 0]])
def test_step_rejects_bad_displacement(grasped, params, disp):
    with pytest.raises(InvalidArgument):
        step_quasi_static(grasped, disp, params)


# -- stepping ------------------------------------------------------------------

def test_zero_displacement_is_a_fixed_point(grasped, params):
    out = step_quasi_static(grasped, [0.0, 0.0, 0.0], params)
    assert np.max(np.abs(out.positions - grasped.positions)) < CFG.settle_velocity_tol
    assert not out.capped
    assert max_speed(out) < CFG.settle_velocity_tol


def test_lift_corner(grasped, params):
    out = step_quasi_static(grasped, [0.0, 0.0, 0.03], params)
    i = grasped.grasped_index
    assert out.positions[i, 2] == grasped.positions[i, 2] + 0.03
    np.testing.assert_array_equal(out.positions[i], grasped.positions[i] + [0, 0, 0.03])
    assert np.all(out.positions[:, 2] >= CFG.table_height - CFG.contact_tol)
    assert out.positions[:, 2].max() == pytest.approx(0.03)


def test_step_is_bit_deterministic(grasped, params):
    def run():
        s = grasped
        for a in fold_actions()[:4]:
            s = step_quasi_static(s, a, params)
        return s

    a, b = run(), run()
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.velocities.tobytes() == b.velocities.tobytes()


def test_step_does_not_mutate_input(grasped, params):
    before = grasped.positions.copy()
    step_quasi_static(grasped, [0.01, 0, 0.02], params)
    assert np.array_equal(before, grasped.positions)


def test_divergence_names_substep(grasped, params):
    unstable = SimConfig(safety_factor=40.0)
    with pytest.raises(NumericalDivergence) as info:
        s = grasped
        for a in fold_actions():
            s = step_quasi_static(s, a, params, unstable)
    assert info.value.substep >= 0
    assert "substep" in str(info.value)


def test_table_clamps_commanded_target(grasped, params):
    out = step_quasi_static(grasped, [0.0, 0.0, -0.03], params)
    assert out.ee_position[2] == CFG.table_height


# -- settle ---------------------------------------------------------------------

def test_settle_idempotent_on_settled_state(grasped, params):
    a = settle(grasped, params)
    b = settle(a, params)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.positions, grasped.positions)


def test_drop_onto_table(params):
    s = init_cloth()
    lifted = replace(s, positions=s.positions + [0.0, 0.0, 0.001])
    out = settle(lifted, params, replace(CFG, max_settle_iters=2000))
    assert np.all(np.abs(out.positions[:, 2] - CFG.table_height) <= CFG.contact_tol)


def test_stiffer_cloth_stays_higher_after_release():
    means = {}
    for stiffness in (20.0, 100.0):
        p = ClothParams(stiffness=stiffness)
        s = init_cloth(params=p)
        s = grasp(s, s.positions[corner_index(13, "top-left")])
        for _ in range(2):
            s = step_quasi_static(s, [0.0, 0.0, 0.025], p)
        r = settle(release(s), p)
        means[stiffness] = r.positions[r.half_label == UPPER, 2].mean()
    assert means[100.0] > means[20.0]


# -- properties ---------------------------------------------------------------

actions = st.lists(
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
        lambda d: np.linalg.norm(d) > 1e-3),
    min_size=1, max_size=4)


@given(actions)
def test_step_contracts(dirs):
    p = ClothParams()
    s = init_cloth()
    s = grasp(s, s.positions[corner_index(13, "top-left")])
    for d in dirs:
        d = np.array(d) / np.linalg.norm(d) * 0.03
        target = s.ee_position + d
        target[2] = max(target[2], CFG.table_height)
        s = step_quasi_static(s, d, p)
        # grasp constraint: exact equality
        assert np.array_equal(s.ee_position, target)
        # table non-penetration
        assert s.positions[:, 2].min() >= CFG.table_height - CFG.contact_tol
        # quasi-static contract when the relaxation converged
        if not s.capped:
            assert max_speed(s) < CFG.settle_velocity_tol


@given(st.floats(0, 2 * math.pi), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_rigid_motion_equivariance(theta, tx, ty):
    p = ClothParams()
    base = init_cloth()
    moved = init_cloth(pose=(theta, tx, ty))
    i = corner_index(13, "top-left")
    a, b = grasp(base, base.positions[i]), grasp(moved, moved.positions[i])
    c, s_ = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s_, 0], [s_, c, 0], [0, 0, 1]])
    for d in fold_actions()[:3]:
        a = step_quasi_static(a, d, p)
        b = step_quasi_static(b, rot @ d, p)
    expected = a.positions @ rot.T + [tx, ty, 0]
    np.testing.assert_allclose(b.positions, expected, atol=1e-7)


def test_frozen_bottom_on_scripted_fold(grasped, params):
    bottom = grasped.half_label == BOTTOM
    start = grasped.positions[bottom, :2].copy()
    s, worst = grasped, 0.0
    for a in fold_actions():
        s = step_quasi_static(s, a, params)
        worst = max(worst, np.linalg.norm(s.positions[bottom, :2] - start, axis=1).max())
    assert worst < 0.01


def test_export_csv(tmp_path, flat):
    path = tmp_path / "state.csv"
    export_csv(flat, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["index", "label", "x", "y", "z"]
    assert len(rows) == 169
    assert {r["label"] for r in rows} == {"upper", "bottom"}
    assert float(rows[0]["x"]) == flat.positions[0, 0]
