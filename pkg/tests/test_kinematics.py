"""Edges, frames, curvature, twist, their Jacobians and the mass matrix."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from sagfree import kinematics as kn
from sagfree.errors import DegenerateEdge, NonPositiveRestLength, TangentReversal
from sagfree.gradcheck import check_curvature, check_twist, random_strand, rel_err, _fd_q, _scatter


def state_of(points, thetas=None):
    return kn.StrandState(kn.StrandGeometry(np.asarray(points, float), thetas))


def orthonormal_defect(kin):
    worst = 0.0
    for a, b in ((kin.d1, kin.d2), (kin.m1, kin.m2)):
        frame = np.stack([a, b, kin.tangents], axis=1)
        worst = max(worst, np.abs(np.einsum("nij,nkj->nik", frame, frame) - np.eye(3)).max())
    return worst


# --- compute_edges ------------------------------------------------------------

def test_edges_collinear():
    l, t = kn.compute_edges([(0, 0, 0), (0, -0.5, 0), (0, -1, 0)])
    np.testing.assert_allclose(l, [0.5, 0.5])
    np.testing.assert_allclose(t, [(0, -1, 0), (0, -1, 0)])


def test_edges_unit_axes():
    l, t = kn.compute_edges([(0, 0, 0), (1, 0, 0), (1, 1, 0)])
    np.testing.assert_allclose(l, [1, 1])
    np.testing.assert_allclose(t, [(1, 0, 0), (0, 1, 0)])


def test_duplicate_vertices_rejected():
    with pytest.raises(DegenerateEdge):
        kn.compute_edges([(0, 0, 0), (0, 0, 0), (1, 0, 0)])


def test_reversal_rejected_with_vertex_index():
    geom = kn.StrandGeometry(np.array([(0, 0, 0), (1, 0, 0), (2, 0, 0), (1, 0, 0)], float))
    with pytest.raises(TangentReversal, match="2"):
        geom.validate()


def test_too_few_vertices():
    with pytest.raises(ValueError):
        kn.StrandGeometry(np.zeros((2, 3)))


# --- frames ---------------------------------------------------------------

def test_straight_rod_frames_constant():
    s = state_of([(0, -k * 0.1, 0) for k in range(6)])
    np.testing.assert_allclose(s.d1, np.tile([1.0, 0, 0], (5, 1)))


def test_right_angle_keeps_perpendicular_director():
    # d1 = z is perpendicular to both tangents and is the rotation axis
    d1 = kn.parallel_transport(np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    np.testing.assert_allclose(d1, [0, 0, 1], atol=1e-15)


def test_parallel_transport_matches_rodrigues():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b, u = (v / np.linalg.norm(v) for v in rng.normal(size=(3, 3)))
        axis = np.cross(a, b)
        angle = np.arctan2(np.linalg.norm(axis), a @ b)
        R = Rotation.from_rotvec(angle * axis / np.linalg.norm(axis))
        np.testing.assert_allclose(kn.parallel_transport(u, a, b), R.apply(u), atol=1e-12)


def test_time_transport_identity_when_unchanged(rng):
    s = random_strand(rng)
    moved = s.with_q(s.q)
    np.testing.assert_allclose(moved.d1, s.d1, atol=1e-14)
    np.testing.assert_allclose(moved.ref_twist, s.ref_twist, atol=1e-14)


def test_time_transport_follows_rigid_rotation():
    """Exact when the rotation axis is normal to every tangent (planar strand).

    For a general axis, minimal-rotation transport differs from the rigid
    rotation by a spin about each tangent, so only this case has the direct
    rotation as oracle.
    """
    s = state_of([(0, 0, 0), (0.1, -0.2, 0), (0.3, -0.3, 0), (0.35, -0.5, 0)], thetas=[0.2, -0.4, 1.0])
    R = Rotation.from_rotvec([0.0, 0.0, 0.3])
    moved = s.with_q(kn.pack_q(R.apply(s.geometry.positions), s.geometry.thetas))
    np.testing.assert_allclose(moved.d1, R.apply(s.d1), atol=1e-14)
    np.testing.assert_allclose(kn.evaluate(moved).kappa, kn.evaluate(s).kappa, atol=1e-12)


def test_reversal_during_motion_rejected():
    s = state_of([(0, 0, 0), (1, 0, 0), (2, 0, 0)])
    q = kn.pack_q(np.array([(0, 0, 0), (1, 0, 0), (0, 0, 0.0)]), np.zeros(2))
    with pytest.raises(TangentReversal):
        s.with_q(q)


def test_reference_twist_zero_for_fresh_frames():
    s = state_of([(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 1, 0.5)])
    np.testing.assert_allclose(s.ref_twist, 0.0, atol=1e-14)


def test_reference_twist_matches_accumulated_rotation():
    """Reference twist picked up by sweeping edge 1 around a cone.

    Time transport over a closed cone of half-angle ``a`` about edge 0 leaves
    a holonomy of ``2 pi (1 - cos a)``; the sweep direction sets its sign.
    """
    def run(steps, direction=1.0):
        s = state_of([(0, 0, 0), (0, -1, 0), (0.3, -1.8, 0)])
        for k in range(1, steps + 1):
            ang = direction * 2 * np.pi * k / steps
            tip = np.array([0.3 * np.cos(ang), -1.8, 0.3 * np.sin(ang)])
            pos = s.geometry.positions.copy()
            pos[2] = tip
            s = s.with_q(kn.pack_q(pos, s.geometry.thetas))
        return s.ref_twist[0]

    coarse, fine = run(200), run(2000)
    # a full cone sweep of half-angle a accumulates 2 pi (1 - cos a) holonomy
    a = np.arctan2(0.3, 0.8)
    expected = 2 * np.pi * (1 - np.cos(a))
    assert abs(fine - coarse) < 1e-3
    assert abs(fine - expected) < 1e-4
    assert run(2000, direction=-1.0) == pytest.approx(-fine, abs=1e-10)


def test_material_frames_theta_zero_equal_reference():
    s = state_of([(0, 0, 0), (1, 0, 0), (1, 1, 0)])
    kin = kn.evaluate(s)
    np.testing.assert_allclose(kin.m1, kin.d1)
    np.testing.assert_allclose(kin.m2, kin.d2)


def test_material_frames_quarter_turn():
    s = state_of([(0, 0, 0), (1, 0, 0), (1, 1, 0)], thetas=[np.pi / 2, np.pi / 2])
    kin = kn.evaluate(s)
    np.testing.assert_allclose(kin.m1, kin.d2, atol=1e-15)
    np.testing.assert_allclose(kin.m2, -kin.d1, atol=1e-15)


def test_material_frames_orthonormal_random(rng):
    for _ in range(10):
        assert orthonormal_defect(kn.evaluate(random_strand(rng))) < 1e-12


# --- curvature and twist ----------------------------------------------------------

def test_binormal_unit_axes():
    kb = kn.curvature_binormal(np.array([(1.0, 0, 0), (0, 1.0, 0)]))
    np.testing.assert_allclose(kb, [(0, 0, 2)])


def test_collinear_curvature_zero():
    kin = kn.evaluate(state_of([(0, 0, 0), (0, -1, 0), (0, -2, 0)]))
    np.testing.assert_array_equal(kin.kappa, 0.0)


def test_right_angle_binormal_norm():
    kin = kn.evaluate(state_of([(0, 0, 0), (1, 0, 0), (1, 1, 0)]))
    assert np.linalg.norm(kin.kb[0]) == pytest.approx(2 * np.tan(np.pi / 4), rel=1e-14)


def test_twist_definition():
    s = state_of([(0, 0, 0), (0, -1, 0), (0, -2, 0)], thetas=[0.0, 0.3])
    kin = kn.evaluate(s)
    assert kin.ref_twist[0] == 0.0
    assert kin.twist[0] == pytest.approx(0.3)


def test_straight_untwisted_zero_twist(vertical_state):
    np.testing.assert_array_equal(kn.evaluate(vertical_state).twist, 0.0)


def test_curvature_gradient_fd(rng):
    for _ in range(5):
        assert check_curvature(random_strand(rng)) < 1e-6


def test_twist_gradient_fd(rng):
    for _ in range(5):
        assert check_twist(random_strand(rng)) < 1e-6


def test_curvature_gradient_structure(rng):
    jac = kn.curvature_gradient(kn.evaluate(random_strand(rng)))
    # columns 3 and 7 are theta_{i-1} and theta_i
    np.testing.assert_array_equal(jac[:, :2, 7], 0.0)
    np.testing.assert_array_equal(jac[:, 2:, 3], 0.0)


def test_twist_gradient_angle_entries(rng):
    g = kn.twist_gradient(kn.evaluate(random_strand(rng)))
    np.testing.assert_array_equal(g[:, 3], -1.0)
    np.testing.assert_array_equal(g[:, 7], 1.0)


def test_straight_rod_axial_perturbation_no_curvature(vertical_state):
    kin = kn.evaluate(vertical_state)
    jac = _scatter(20, kn.curvature_gradient(kin))
    axial = kn.vertex_dofs(20)[:, 1]
    np.testing.assert_allclose(jac[..., axial], 0.0, atol=1e-14)
    twist = _scatter(20, kn.twist_gradient(kin))
    np.testing.assert_allclose(twist[:, kn.vertex_dofs(20).ravel()], 0.0, atol=1e-14)


def test_rigid_rotation_keeps_twist(rng):
    s = random_strand(rng)
    R = Rotation.from_rotvec([0.4, 0.1, -0.7]).as_matrix()
    g = s.geometry
    moved = kn.StrandState(kn.StrandGeometry(g.positions @ R.T, g.thetas), d1=s.d1 @ R.T, ref_twist=s.ref_twist)
    np.testing.assert_allclose(kn.evaluate(moved).twist, kn.evaluate(s).twist, atol=1e-10)
    np.testing.assert_allclose(kn.evaluate(moved).kappa, kn.evaluate(s).kappa, atol=1e-10)


@st.composite
def strands(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(3, 10))
    turn = draw(st.floats(0.0, 2.5))
    return random_strand(np.random.default_rng(seed), n, max_turn=turn)


@settings(max_examples=40, deadline=None)
@given(strands())
def test_binormal_identity_property(s):
    kin = kn.evaluate(s)
    kb = np.linalg.norm(kin.kb, axis=1)
    target = 2 * np.tan(kin.turning_angles / 2)
    assert np.all(np.abs(kb - target) <= 1e-10 * (1 + target))


@settings(max_examples=40, deadline=None)
@given(strands())
def test_kappa_norm_identity_property(s):
    kin = kn.evaluate(s)
    lhs = np.sum(kin.kappa**2, axis=1)
    rhs = 2 * np.sum(kin.kb**2, axis=1)
    assert np.all(np.abs(lhs - rhs) <= 1e-10 * (1 + rhs))


@settings(max_examples=25, deadline=None)
@given(strands())
def test_frames_orthonormal_property(s):
    assert orthonormal_defect(kn.evaluate(s)) < 1e-12


def test_fd_helper_is_central():
    # the oracle itself: quadratic in q differentiates exactly
    s = state_of([(0, 0, 0), (1, 0, 0), (2, 0.1, 0)])
    fd = _fd_q(lambda st_: np.sum(st_.q**2), s, 1e-4)
    assert rel_err(fd, 2 * s.q) < 1e-9


# --- mass ------------------------------------------------------------------

def test_mass_entries():
    p = kn.MaterialParams(rho=1e3, radius=1e-3)
    m = kn.build_mass_matrix(np.full(4, 0.05), p)
    assert m.vertex_masses[2] == pytest.approx(1e3 * np.pi * 1e-6 * 0.05)
    assert m.vertex_masses[2] == pytest.approx(1.5708e-4, rel=1e-4)
    assert m.edge_inertias[2] == pytest.approx(0.5 * 1e3 * np.pi * 1e-12 * 0.05)
    assert m.edge_inertias[2] == pytest.approx(7.854e-11, rel=1e-4)
    assert m.vertex_masses[-1] == pytest.approx(1e3 * np.pi * 1e-6 * 0.05 / 2)


def test_mass_free_view_excludes_clamped():
    m = kn.build_mass_matrix(np.full(4, 0.05), kn.MaterialParams())
    assert m.free_diag.size == 4 * 5 - 1 - kn.N_FIXED
    assert np.all(np.isfinite(m.diag)) and np.all(m.free_diag > 0)


def test_mass_rejects_nonpositive_lengths():
    with pytest.raises(NonPositiveRestLength):
        kn.build_mass_matrix([0.1, 0.0], kn.MaterialParams())


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        kn.MaterialParams(c_bend=0.0)
