"""Prediction, the implicit step, root motion and trajectory metrics."""
import numpy as np
import pytest

from sagfree import kinematics as kn
from sagfree.elastic import ExternalLoad, RestShape
from sagfree.errors import ValidationError
from sagfree.restshape import hanging_chain_rest_lengths, optimize
from sagfree.scenarios import hair
from sagfree.sim import Integrator, RootMotion, SimConfig, equilibrium_residual, predict, simulate, step

ZERO_G = (0.0, 0.0, 0.0)


def oracle_rest(state, params):
    naive = RestShape.from_state(state)
    return RestShape(hanging_chain_rest_lengths(state, params, ExternalLoad()), naive.kappa, naive.twist)


# --- predict -----------------------------------------------------------------

def test_predict_at_rest_is_identity():
    m = kn.build_mass_matrix(np.full(3, 0.1), kn.MaterialParams())
    q = np.arange(15.0)
    np.testing.assert_array_equal(predict(q, np.zeros(15), m, np.zeros(15), 0.1), q)


def test_predict_unit_plug_in():
    m = kn.GeneralizedMass(np.ones(11))
    f = np.zeros(11)
    x2 = kn.vertex_dofs(3)[2]
    f[x2] = (0, -1, 0)
    q_star = predict(np.zeros(11), np.zeros(11), m, f, 1.0)
    np.testing.assert_array_equal(q_star[x2], [0, -1, 0])


def test_predict_leaves_clamped_alone():
    m = kn.GeneralizedMass(np.ones(11))
    q_star = predict(np.zeros(11), np.ones(11), m, np.ones(11), 0.5)
    np.testing.assert_array_equal(q_star[: kn.N_FIXED], 0.0)
    scripted = predict(np.zeros(11), np.ones(11), m, np.ones(11), 0.5, fixed=np.arange(7.0))
    np.testing.assert_array_equal(scripted[: kn.N_FIXED], np.arange(7.0))


# --- step and simulate ---------------------------------------------------------------

def test_equilibrium_is_fixed_point(vertical_state):
    p = kn.MaterialParams(c_stretch=5e4)
    new = step(vertical_state, oracle_rest(vertical_state, p), p, SimConfig())
    assert np.abs(new.q - vertical_state.q).max() < 1e-10


def test_zero_gravity_at_rest_stays_put(rng):
    p = kn.MaterialParams()
    state = kn.StrandState(hair(n=15))
    traj = simulate(state, RestShape.from_state(state), p, SimConfig(gravity=ZERO_G, step_count=20))
    m = traj.metrics
    for col in (m.max_drift, m.tip_drift, m.kinetic_energy):
        np.testing.assert_array_equal(col, 0.0)


def test_naive_strand_sags_downward(vertical_state):
    p = kn.MaterialParams(c_stretch=5e3)
    traj = simulate(vertical_state, RestShape.from_state(vertical_state), p, SimConfig(step_count=10))
    tip_y = traj.positions[:, -1, 1]
    assert np.all(np.diff(tip_y) < 0)


def test_bitwise_deterministic(rng):
    state = kn.StrandState(hair(n=15))
    p = kn.MaterialParams(c_bend=2.5e7, c_twist=2.5e7)
    rest = RestShape.from_state(state)
    a = simulate(state, rest, p, SimConfig(step_count=15))
    b = simulate(state, rest, p, SimConfig(step_count=15))
    np.testing.assert_array_equal(a.q, b.q)
    np.testing.assert_array_equal(a.metrics.kinetic_energy, b.metrics.kinetic_energy)


def test_substeps_equal_shorter_steps(vertical_state):
    p = kn.MaterialParams(c_stretch=5e3)
    rest = RestShape.from_state(vertical_state)
    two = simulate(vertical_state, rest, p, SimConfig(dt=0.02, substeps=2, step_count=3))
    fine = simulate(vertical_state, rest, p, SimConfig(dt=0.01, step_count=6))
    np.testing.assert_allclose(two.q[-1], fine.q[-1], rtol=0, atol=1e-14)
    assert two.metrics.time[-1] == pytest.approx(0.06)


def test_clamped_dofs_static_without_script(vertical_state):
    p = kn.MaterialParams(c_stretch=5e3)
    traj = simulate(vertical_state, RestShape.from_state(vertical_state), p, SimConfig(step_count=10))
    np.testing.assert_array_equal(traj.q[:, : kn.N_FIXED], np.tile(vertical_state.q[: kn.N_FIXED], (11, 1)))


def test_root_motion_respected_every_frame(vertical_state):
    p = kn.MaterialParams(c_stretch=1e5)
    motion = RootMotion([0.0, 0.5], [[0, 0, 0], [0.1, 0.05, 0]], [[0, 0, 0], [0, 0.4, 0.2]])
    config = SimConfig(step_count=12, root_motion=motion)
    seen = []
    traj = simulate(vertical_state, RestShape.from_state(vertical_state), p, config,
                    callback=lambda k, s: seen.append((k, s)))
    x0 = vertical_state.geometry.positions[:2]
    kin0 = kn.evaluate(vertical_state)
    for k, s in seen:
        t = traj.metrics.time[k]
        np.testing.assert_array_equal(s.geometry.positions[:2], motion.apply(x0, t))
        R, _ = motion.transform(t)
        # the first material director is carried rigidly by the root
        np.testing.assert_allclose(kn.evaluate(s).m1[0], R @ kin0.m1[0], atol=1e-12)


def test_kinetic_energy_starts_at_zero(vertical_state):
    p = kn.MaterialParams(c_stretch=5e3)
    traj = simulate(vertical_state, RestShape.from_state(vertical_state), p, SimConfig(step_count=3))
    assert traj.metrics.kinetic_energy[0] == 0.0 and traj.metrics.kinetic_energy[-1] > 0.0


def test_integrator_uses_frozen_mass(vertical_state):
    p = kn.MaterialParams(c_stretch=5e4)
    rest = oracle_rest(vertical_state, p)
    integ = Integrator(vertical_state, rest, p, SimConfig())
    expected = kn.build_mass_matrix(kn.evaluate(vertical_state).lengths, p)
    np.testing.assert_array_equal(integ.mass.diag, expected.diag)


# --- equilibrium residual ---------------------------------------------------------------

def test_residual_examples(vertical_state, horizontal_state):
    p = kn.MaterialParams(c_stretch=5e5)
    rest, _ = optimize(vertical_state, p, ExternalLoad())
    assert equilibrium_residual(vertical_state, rest, p, ExternalLoad()) < 1e-8
    assert equilibrium_residual(horizontal_state, RestShape.from_state(horizontal_state), p, ExternalLoad()) > 1e-3
    assert equilibrium_residual(horizontal_state, RestShape.from_state(horizontal_state), p, ExternalLoad(ZERO_G)) == 0.0


@pytest.mark.parametrize("dt", [1 / 30, 1 / 60, 1 / 240])
def test_residual_does_not_depend_on_dt(vertical_state, dt):
    p = kn.MaterialParams(c_stretch=5e4)
    rest = oracle_rest(vertical_state, p)
    before = equilibrium_residual(vertical_state, rest, p, ExternalLoad())
    after = equilibrium_residual(step(vertical_state, rest, p, SimConfig(dt=dt)), rest, p, ExternalLoad())
    reference = equilibrium_residual(vertical_state, rest, p, SimConfig(dt=1 / 60).load)
    assert before == reference
    assert after < 1e-8


# --- configuration ------------------------------------------------------------------

def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(dt=0.0)
    with pytest.raises(ValidationError):
        SimConfig(substeps=0)
    assert SimConfig(dt=0.1, substeps=4).h == pytest.approx(0.025)


def test_root_motion_interpolation():
    motion = RootMotion([0.0, 1.0], [[0, 0, 0], [1.0, 0, 0]], [[0, 0, 0], [0, 0, np.pi / 2]])
    R, tr = motion.transform(0.5)
    np.testing.assert_allclose(tr, [0.5, 0, 0])
    np.testing.assert_allclose(R @ [1.0, 0, 0], [np.cos(np.pi / 4), np.sin(np.pi / 4), 0], atol=1e-15)
    # held at the end keys
    np.testing.assert_allclose(motion.transform(3.0)[1], [1.0, 0, 0])
    with pytest.raises(ValidationError):
        RootMotion([0.0, 0.0], np.zeros((2, 3)), np.zeros((2, 3)))
