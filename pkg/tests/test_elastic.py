"""Energies, generalized forces and the position Hessian."""
import numpy as np
import pytest

from sagfree import kinematics as kn
from sagfree.elastic import (
    ExternalLoad,
    RestShape,
    bend_energy_gradient,
    elastic_energy_gradient,
    elastic_hessian,
    external_force,
    inertia_energy_gradient,
    position_hessian,
    stretch_energy_gradient,
    total_force,
    twist_energy_gradient,
)
from sagfree.errors import NonPositiveRestLength
from sagfree.gradcheck import _fd_q, check_energy, random_params, random_rest, random_strand, rel_err
from sagfree.restshape import hanging_chain_rest_lengths

ENERGIES = (stretch_energy_gradient, bend_energy_gradient, twist_energy_gradient)


def random_case(rng, n=None):
    state = random_strand(rng, n)
    return state, random_rest(rng, state), random_params(rng)


def test_rest_state_has_no_energy(rng):
    state = random_strand(rng)
    rest = RestShape.from_state(state)
    kin = kn.evaluate(state)
    for fn in ENERGIES:
        e, g = fn(kin, rest, kn.MaterialParams())
        assert e == 0.0
        np.testing.assert_array_equal(g, 0.0)


def test_stretch_gradient_hand_value():
    # edge 1 runs along z from l-bar = 0.05 to l = 0.06
    state = kn.StrandState.from_positions([(0, 0, 0), (0, 0, 0.05), (0, 0, 0.11)])
    rest = RestShape([0.05, 0.05], np.zeros((1, 4)), np.zeros(1))
    p = kn.MaterialParams(c_stretch=1e8, radius=1e-3)
    _, g = stretch_energy_gradient(kn.evaluate(state), rest, p)
    np.testing.assert_allclose(g[kn.vertex_dofs(3)[2]], [0, 0, 1e8 * np.pi * 1e-6 * 0.2], rtol=1e-12)
    assert g[kn.vertex_dofs(3)[2]][2] == pytest.approx(62.83, abs=5e-3)


def test_edge_zero_does_not_stretch():
    state = kn.StrandState.from_positions([(0, 0, 0), (0, 0, 0.25), (0, 0, 0.375)])
    rest = RestShape([0.125, 0.125], np.zeros((1, 4)), np.zeros(1))
    e, _ = stretch_energy_gradient(kn.evaluate(state), rest, kn.MaterialParams())
    assert e == 0.0


@pytest.mark.parametrize("which", ["stretch", "bend", "twist"])
def test_energy_gradients_fd(rng, which):
    for _ in range(5):
        assert check_energy(*random_case(rng), which) < 1e-6


def test_bend_energy_halves_when_lengths_double(rng):
    state, rest, p = random_case(rng)
    kin = kn.evaluate(state)
    e1, _ = bend_energy_gradient(kin, rest, p)
    doubled = RestShape(2 * rest.lengths, rest.kappa, rest.twist)
    e2, _ = bend_energy_gradient(kin, doubled, p)
    assert e2 == pytest.approx(e1 / 2, rel=1e-12)


def test_twist_gradient_angle_component(rng):
    state, rest, p = random_case(rng)
    kin = kn.evaluate(state)
    _, g = twist_energy_gradient(kin, rest, p)
    coef = p.k_twist / (rest.lengths[:-1] + rest.lengths[1:])
    dm = kin.twist - rest.twist
    # theta of the last edge only sees its own stencil
    assert g[kn.edge_dofs(state.n_vertices)[-1]] == pytest.approx(coef[-1] * dm[-1], rel=1e-12)


def test_translation_invariance(rng):
    state, rest, p = random_case(rng)
    vd = kn.vertex_dofs(state.n_vertices)
    for fn in ENERGIES:
        _, gi = fn(kn.evaluate(state), rest, p)
        scale = np.abs(gi).max() + 1e-300
        assert np.abs(gi[vd].sum(axis=0)).max() / scale < 1e-10
    moved = kn.StrandState(
        kn.StrandGeometry(state.geometry.positions + [0.3, -2.0, 1.0], state.geometry.thetas),
        d1=state.d1,
        ref_twist=state.ref_twist,
    )
    e0, _ = elastic_energy_gradient(state, rest, p)
    e1, _ = elastic_energy_gradient(moved, rest, p)
    assert e1 == pytest.approx(e0, rel=1e-10)


def test_inertia_energy():
    m = kn.build_mass_matrix(np.full(3, 0.1), kn.MaterialParams())
    rng = np.random.default_rng(0)
    q, qs = rng.normal(size=15), rng.normal(size=15)
    e, g = inertia_energy_gradient(q, q, m, 0.01)
    assert e == 0.0 and not g.any()
    e1, g1 = inertia_energy_gradient(q, qs, m, 0.01)
    e2, _ = inertia_energy_gradient(q, qs, m, 0.02)
    assert e2 == pytest.approx(e1 / 4, rel=1e-14)
    fd = np.array([
        (inertia_energy_gradient(q + h, qs, m, 0.01)[0] - inertia_energy_gradient(q - h, qs, m, 0.01)[0]) / 2e-5
        for h in 1e-5 * np.eye(15)
    ])
    assert rel_err(fd, g1) < 1e-10


def test_gravity_force_hand_value():
    m = kn.build_mass_matrix(np.full(4, 0.05), kn.MaterialParams(rho=1e3, radius=1e-3))
    f = external_force(m, ExternalLoad()).full
    np.testing.assert_allclose(f[kn.vertex_dofs(5)[2]], [0, -1.5410e-3, 0], rtol=1e-4)
    np.testing.assert_array_equal(f[kn.edge_dofs(5)[1:]], 0.0)
    np.testing.assert_array_equal(external_force(m, ExternalLoad((0, 0, 0))).full, 0.0)


def test_tail_load_adds_ten_weights():
    m = kn.build_mass_matrix(np.full(4, 0.05), kn.MaterialParams())
    g = np.array([0, -9.81, 0])
    tip_weight = m.vertex_masses[-1] * g
    f0 = external_force(m, ExternalLoad()).full
    f1 = external_force(m, ExternalLoad(point_forces={4: 10 * tip_weight})).full
    np.testing.assert_allclose(f1[kn.vertex_dofs(5)[4]] - f0[kn.vertex_dofs(5)[4]], 10 * tip_weight)


def test_total_force_zero_at_rest_without_gravity(rng):
    state = random_strand(rng)
    p = kn.MaterialParams()
    m = kn.build_mass_matrix(kn.evaluate(state).lengths, p)
    f = total_force(state, RestShape.from_state(state), p, ExternalLoad((0, 0, 0)), m)
    np.testing.assert_array_equal(f.full, 0.0)


def test_total_force_reassembles(rng):
    state, rest, p = random_case(rng)
    m = kn.build_mass_matrix(kn.evaluate(state).lengths, p)
    load = ExternalLoad()
    kin = kn.evaluate(state)
    expected = external_force(m, load).full - sum(fn(kin, rest, p)[1] for fn in ENERGIES)
    expected[: kn.N_FIXED] = 0.0
    np.testing.assert_array_equal(total_force(state, rest, p, load, m).full, expected)


def test_hanging_chain_oracle_balances_forces(vertical_state):
    p = kn.MaterialParams(c_stretch=5e4)
    load = ExternalLoad()
    lengths = hanging_chain_rest_lengths(vertical_state, p, load)
    naive = RestShape.from_state(vertical_state)
    rest = RestShape(lengths, naive.kappa, naive.twist)
    m = kn.build_mass_matrix(kn.evaluate(vertical_state).lengths, p)
    assert np.abs(total_force(vertical_state, rest, p, load, m).full).max() < 1e-9


def test_rest_shape_validation():
    with pytest.raises(NonPositiveRestLength):
        RestShape([0.1, -0.1], np.zeros((1, 4)), np.zeros(1))
    with pytest.raises(ValueError):
        RestShape([0.1, 0.1], np.zeros((2, 4)), np.zeros(1))


# --- Hessian -------------------------------------------------------------------

def fd_hessian(state, rest, p):
    kin = kn.evaluate(state)
    return _fd_q(lambda s: elastic_energy_gradient(s, rest, p)[1], state, 1e-6 * kin.lengths.mean())


def test_hessian_matches_fd(rng):
    for _ in range(3):
        state, rest, p = random_case(rng, n=6)
        fd = fd_hessian(state, rest, p)
        fd = 0.5 * (fd + fd.T)
        H = elastic_hessian(state, rest, p, project=False).toarray()
        assert rel_err(fd, H) < 1e-5


def test_hessian_symmetric_before_projection(rng):
    state, rest, p = random_case(rng)
    H = elastic_hessian(state, rest, p, project=False)
    assert abs(H - H.T).max() < 1e-10 * abs(H).max()


def test_projected_hessian_psd(rng):
    state, rest, p = random_case(rng)
    H = elastic_hessian(state, rest, p, project=True).toarray()
    assert np.linalg.eigvalsh(H).min() > -1e-9 * np.abs(H).max()


def test_position_hessian_structure(rng):
    state, rest, p = random_case(rng, n=8)
    m = kn.build_mass_matrix(kn.evaluate(state).lengths, p)
    dt = 1 / 60
    A = position_hessian(state, rest, p, m, dt, project=False)
    H = elastic_hessian(state, rest, p, project=False)[kn.N_FIXED:, kn.N_FIXED:]
    np.testing.assert_allclose((A - H).diagonal(), m.free_diag / dt**2, rtol=1e-12, atol=1e-12 * abs(A).max())
    coo = A.tocoo()
    assert np.max(np.abs(coo.row - coo.col)) <= 10
