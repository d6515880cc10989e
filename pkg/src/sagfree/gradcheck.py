"""Finite-difference and invariant checks over seeded random strands.

Every analytic derivative in the package is compared with central
differences; geometric invariants (frame orthonormality, rigid-motion
invariance, the binormal-angle identity, SPD-ness of the Gauss-Newton
matrix) are checked directly.  ``run_all`` drives the suites and is what
the ``gradcheck`` command runs.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import kinematics as kn
from .elastic import (
    ExternalLoad,
    RestShape,
    bend_energy_gradient,
    elastic_energy_gradient,
    stretch_energy_gradient,
    twist_energy_gradient,
)
from .restshape import Objective, OptimizerSettings, RestLayout, StaticProblem

REL_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    worst: float
    tol: float
    cases: int

    @property
    def passed(self):
        return bool(self.worst < self.tol)

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name:<28s} worst={self.worst:.3e} tol={self.tol:.0e} cases={self.cases}"


def rel_err(fd, an):
    fd, an = np.asarray(fd), np.asarray(an)
    scale = max(np.max(np.abs(an)), np.max(np.abs(fd)), 1e-300)
    return float(np.max(np.abs(fd - an)) / scale)


# --- random instances -----------------------------------------------------

def random_strand(rng, n=None, max_turn=2.0):
    """A random polyline with bounded turning angles and random edge angles."""
    n = int(rng.integers(4, 9)) if n is None else n
    t = rng.normal(size=3)
    t /= np.linalg.norm(t)
    pts = [np.zeros(3)]
    for _ in range(n - 1):
        pts.append(pts[-1] + rng.uniform(0.05, 0.15) * t)
        axis = np.cross(t, rng.normal(size=3))
        axis /= np.linalg.norm(axis)
        t = Rotation.from_rotvec(rng.uniform(0.0, max_turn) * axis).apply(t)
    thetas = rng.uniform(-np.pi, np.pi, n - 1)
    state = kn.StrandState(kn.StrandGeometry(np.array(pts), thetas).validate())
    # a twisted reference history: move once so ref_twist is not the rest value
    q = state.q + 1e-3 * rng.normal(size=state.q.size)
    return state.with_q(q)


def random_rest(rng, state, spread=0.3):
    base = RestShape.from_state(state)
    return RestShape(
        base.lengths * rng.uniform(1 - spread, 1 + spread, base.lengths.shape),
        base.kappa + spread * rng.normal(size=base.kappa.shape),
        base.twist + spread * rng.normal(size=base.twist.shape),
    )


def random_params(rng):
    return kn.MaterialParams(
        rho=1e3,
        radius=float(rng.uniform(5e-4, 2e-3)),
        c_stretch=float(10 ** rng.uniform(3, 9)),
        c_bend=float(10 ** rng.uniform(6, 10)),
        c_twist=float(10 ** rng.uniform(6, 10)),
    )


def _fd_q(fn, state, h_pos, h_ang=1e-6):
    """Central differences of ``fn(state)`` over every generalized position."""
    q0 = state.q
    cols = []
    for k in range(q0.size):
        h = h_ang if k % 4 == 3 else h_pos
        e = np.zeros_like(q0)
        e[k] = h
        cols.append((np.asarray(fn(state.with_q(q0 + e))) - np.asarray(fn(state.with_q(q0 - e)))) / (2 * h))
    return np.stack(cols, axis=-1)


def _scatter(n, stencil_jac):
    """(S, ..., 11) stencil Jacobians to (S, ..., 4N-1)."""
    out = np.zeros(stencil_jac.shape[:-1] + (4 * n - 1,))
    sd = kn.stencil_dofs(n)
    for i in range(len(sd)):
        out[i][..., sd[i]] = stencil_jac[i]
    return out


# --- suites ---------------------------------------------------------------

def check_curvature(state):
    kin = kn.evaluate(state)
    an = _scatter(state.n_vertices, kn.curvature_gradient(kin))
    fd = _fd_q(lambda s: kn.evaluate(s).kappa, state, 1e-6 * kin.lengths.mean())
    return rel_err(fd, an)


def check_twist(state):
    kin = kn.evaluate(state)
    an = _scatter(state.n_vertices, kn.twist_gradient(kin))
    fd = _fd_q(lambda s: kn.evaluate(s).twist, state, 1e-6 * kin.lengths.mean())
    return rel_err(fd, an)


def check_energy(state, rest, params, which):
    fn = {"stretch": stretch_energy_gradient, "bend": bend_energy_gradient, "twist": twist_energy_gradient}[which]
    kin = kn.evaluate(state)
    _, an = fn(kin, rest, params)
    fd = _fd_q(lambda s: fn(kn.evaluate(s), rest, params)[0], state, 1e-6 * kin.lengths.mean())
    return rel_err(fd, an)


def _random_s(rng, obj):
    s = obj.s0.copy()
    lay = obj.layout
    s[lay.lengths] *= rng.uniform(0.5, 1.2, s[lay.lengths].shape)  # some outside the box
    s[lay.kappa] += rng.normal(size=s[lay.kappa].shape)
    s[lay.twist] += 0.5 * rng.normal(size=s[lay.twist].shape)
    return s


def _objective(state, params, kind, include_twist=True, beta=1e6):
    settings = OptimizerSettings(objective_kind=kind, include_rest_twist=include_twist, beta=beta)
    problem = StaticProblem(state, params, ExternalLoad())
    return Objective(problem, RestShape.from_state(state), settings)


def check_objective_gradient(rng, state, params, kind):
    obj = _objective(state, params, kind)
    s = _random_s(rng, obj)
    _, grad, _, _ = obj.evaluate(s, need_hessian=False)
    scale = np.where(np.arange(s.size) < obj.layout.n_interior, 0.05, 1.0)
    fd = np.empty_like(s)
    for k in range(s.size):
        h = 1e-6 * scale[k]
        e = np.zeros_like(s)
        e[k] = h
        fd[k] = (obj.value(s + e) - obj.value(s - e)) / (2 * h)
    return rel_err(fd, grad)


def check_rest_jacobian(rng, state, params, include_twist=True):
    problem = StaticProblem(state, params, ExternalLoad())
    rest = random_rest(rng, state)
    lay = RestLayout(state.n_vertices, include_twist)
    s = lay.pack(rest)
    J = problem.jacobian(rest, include_twist).toarray()
    fd = np.empty_like(J)
    for k in range(s.size):
        h = 1e-7 if k >= lay.n_interior else 1e-7 * s[k]
        e = np.zeros_like(s)
        e[k] = h
        fd[:, k] = (problem.forces(lay.unpack(s + e, rest)) - problem.forces(lay.unpack(s - e, rest))) / (2 * h)
    return rel_err(fd, J)


def check_frames(rng, state, moves=20):
    """Worst orthonormality defect of reference and material frames over a random path."""
    worst = 0.0
    for _ in range(moves):
        kin = kn.evaluate(state)
        for a, b in ((kin.d1, kin.d2), (kin.m1, kin.m2)):
            frame = np.stack([a, b, kin.tangents], axis=1)
            gram = np.einsum("nij,nkj->nik", frame, frame)
            worst = max(worst, float(np.abs(gram - np.eye(3)).max()))
        q = state.q + 2e-3 * rng.normal(size=state.q.size)
        state = state.with_q(q)
    return worst


def check_rigid_invariance(rng, state, rest, params):
    """Energy and curvature/twist unchanged by a rigid motion of positions and frames."""
    R = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    shift = rng.normal(size=3)
    g = state.geometry
    moved = kn.StrandState(
        kn.StrandGeometry(g.positions @ R.T + shift, g.thetas),
        d1=state.d1 @ R.T,
        ref_twist=state.ref_twist,
    )
    e0, _ = elastic_energy_gradient(state, rest, params)
    e1, _ = elastic_energy_gradient(moved, rest, params)
    k0, k1 = kn.evaluate(state), kn.evaluate(moved)
    return max(
        abs(e1 - e0) / max(abs(e0), 1e-300),
        float(np.abs(k1.kappa - k0.kappa).max()),
        float(np.abs(k1.twist - k0.twist).max()),
    )


def check_binormal_angle(state):
    kin = kn.evaluate(state)
    phi = kin.turning_angles
    return float(np.max(np.abs(np.linalg.norm(kin.kb, axis=1) - 2 * np.tan(phi / 2)) / (1 + 2 * np.tan(phi / 2))))


def check_gn_spd(rng, n=None):
    """Shortfall of ``min eig(A)`` below ``alpha`` in units of the eigensolver error.

    A dense symmetric eigensolver is accurate to about ``n eps |A|``, so a
    value below 1 means ``min eig >= alpha`` holds as far as it can be
    resolved.  Materials keep ``|A|`` far below ``alpha / eps``.
    """
    n = int(rng.integers(4, 9)) if n is None else n
    state = random_strand(rng, n)
    params = kn.MaterialParams(rho=1e3, radius=1e-2, c_stretch=1e2, c_bend=1e4, c_twist=1e4)
    worst = -np.inf
    for kind in ("kinetic_norm", "force_norm"):
        obj = _objective(state, params, kind)
        s = _random_s(rng, obj)
        _, _, A, _ = obj.evaluate(s)
        A = A.toarray()
        w = np.linalg.eigvalsh(0.5 * (A + A.T))
        resolution = len(w) * np.finfo(float).eps * np.abs(w).max()
        assert resolution < 1e-2 * obj.settings.alpha
        worst = max(worst, (obj.settings.alpha - w.min()) / resolution)
    return worst


# --- driver ---------------------------------------------------------------

SUITES = (
    "curvature_jacobian", "twist_gradient", "stretch_gradient", "bend_gradient",
    "twist_energy_gradient", "objective_kinetic", "objective_force", "objective_equilibrated",
    "rest_jacobian", "rest_jacobian_no_twist", "frame_orthonormality", "rigid_invariance",
    "binormal_angle", "gn_spd",
)


def run_all(n_configs=100, seed=0, tol=REL_TOL):
    """Run every suite over ``n_configs`` seeded strands; returns ``CheckResult``s."""
    worst = {name: 0.0 for name in SUITES}
    tols = {name: tol for name in SUITES}
    tols.update(frame_orthonormality=1e-12, rigid_invariance=1e-9, binormal_angle=1e-12, gn_spd=1.0)
    worst["gn_spd"] = -np.inf
    for k in range(n_configs):
        rng = np.random.default_rng([seed, k])
        state = random_strand(rng)
        params = random_params(rng)
        rest = random_rest(rng, state)
        vals = {
            "curvature_jacobian": check_curvature(state),
            "twist_gradient": check_twist(state),
            "stretch_gradient": check_energy(state, rest, params, "stretch"),
            "bend_gradient": check_energy(state, rest, params, "bend"),
            "twist_energy_gradient": check_energy(state, rest, params, "twist"),
            "objective_kinetic": check_objective_gradient(rng, state, params, "kinetic_norm"),
            "objective_force": check_objective_gradient(rng, state, params, "force_norm"),
            "objective_equilibrated": check_objective_gradient(rng, state, params, "force_norm_equilibrated"),
            "rest_jacobian": check_rest_jacobian(rng, state, params),
            "rest_jacobian_no_twist": check_rest_jacobian(rng, state, params, include_twist=False),
            "frame_orthonormality": check_frames(rng, state),
            "rigid_invariance": check_rigid_invariance(rng, state, rest, params),
            "binormal_angle": check_binormal_angle(state),
            "gn_spd": check_gn_spd(rng),
        }
        for name, v in vals.items():
            worst[name] = max(worst[name], v)
    return [CheckResult(name, worst[name], tols[name], n_configs) for name in SUITES]
