"""Implicit forward simulation of one clamped strand.

Each step takes a single Newton iteration on the incremental potential
``1/(2 dt^2) |q - q*|_M^2 + E(q)`` linearized at the current positions, then
sets the velocity to ``(q_new - q)/dt`` (no damping).  The clamped set
(x_0, theta_0, x_1) is either held still or driven by a ``RootMotion``.

The mass matrix and the gravity load are built once from the initial
geometry and never rebuilt, also when the rest lengths have been optimized.
That keeps the external force consistent with what the rest-shape optimizer
balanced.
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.spatial.transform import Rotation, Slerp

from . import kinematics as kn
from .elastic import DEFAULT_GRAVITY, ExternalLoad, elastic_energy_gradient, elastic_hessian, external_force
from .errors import ValidationError
from .linalg import BandedCholesky, fill_reducing_order


@dataclass(frozen=True)
class RootMotion:
    """Piecewise-linear translation plus shortest-arc rotation keyframes.

    ``rotvecs`` are axis-angle vectors (radians).  The rigid transform at
    time ``t`` maps a point ``p`` of the initial clamped set to
    ``R(t) (p - pivot) + pivot + translation(t)``.  Outside the keyed range
    the end keys are held.
    """

    times: np.ndarray
    translations: np.ndarray
    rotvecs: np.ndarray
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        tr = np.asarray(self.translations, dtype=float).reshape(-1, 3)
        rv = np.asarray(self.rotvecs, dtype=float).reshape(-1, 3)
        if not (len(t) == len(tr) == len(rv)) or len(t) == 0:
            raise ValidationError("root motion needs matching, non-empty keyframe arrays")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("root motion key times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "translations", tr)
        object.__setattr__(self, "rotvecs", rv)
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=float))

    def transform(self, t):
        """``(R, translation)`` at time ``t``."""
        tc = float(np.clip(t, self.times[0], self.times[-1]))
        if len(self.times) == 1:
            return Rotation.from_rotvec(self.rotvecs[0]).as_matrix(), self.translations[0].copy()
        trans = np.array([np.interp(tc, self.times, self.translations[:, k]) for k in range(3)])
        rot = Slerp(self.times, Rotation.from_rotvec(self.rotvecs))(tc)
        return rot.as_matrix(), trans

    def apply(self, points, t):
        R, trans = self.transform(t)
        return (np.asarray(points) - self.pivot) @ R.T + self.pivot + trans


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 60.0
    substeps: int = 1
    gravity: tuple = DEFAULT_GRAVITY
    step_count: int = 300
    root_motion: RootMotion = None
    project_hessian: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValidationError("substeps must be an integer >= 1")
        if self.step_count < 0:
            raise ValidationError("step_count must be non-negative")

    @property
    def h(self):
        """Length of one Newton step."""
        return self.dt / self.substeps

    @property
    def load(self):
        return ExternalLoad(tuple(self.gravity))


def predict(q, qdot, mass, f_ext, dt, fixed=None):
    """``q* = q + dt qdot + dt^2 M^-1 f_ext`` on the free DOFs.

    The clamped entries are copied from ``fixed`` (the scripted values) or
    left at ``q`` when no script is given.
    """
    q = np.asarray(q, dtype=float)
    q_star = q.copy()
    free = mass.free
    q_star[free] = q[free] + dt * np.asarray(qdot)[free] + dt**2 * np.asarray(f_ext)[free] / mass.free_diag
    if fixed is not None:
        q_star[: kn.N_FIXED] = fixed
    return q_star


def _root_dofs(initial, motion, t, d1_new):
    """Scripted clamped DOFs at time ``t``.

    Positions follow the rigid motion.  ``theta_0`` is chosen so the first
    material frame is the rotated initial one, measured from the transported
    reference frame ``d1_new``.
    """
    pos0 = initial.geometry.positions[:2]
    pos = motion.apply(pos0, t)
    R, _ = motion.transform(t)
    kin0 = kn.evaluate(initial)
    target = R @ kin0.m1[0]
    t0 = pos[1] - pos[0]
    t0 = t0 / np.linalg.norm(t0)
    theta0 = float(kn.signed_angle(d1_new, target, t0))
    return np.concatenate([pos[0], [theta0], pos[1]])


class Integrator:
    """Stateful stepper for a strand with frozen mass and external force."""

    def __init__(self, initial, rest, params, config, mass=None, load=None):
        self.initial = initial
        self.rest = rest
        self.params = params
        self.config = config
        lengths, _ = kn.compute_edges(initial.geometry.positions)
        self.mass = mass if mass is not None else kn.build_mass_matrix(lengths, params)
        self.load = load if load is not None else config.load
        self.f_ext = external_force(self.mass, self.load).full
        self.time = 0.0
        self._order = None

    def _scripted(self, state, t_new):
        motion = self.config.root_motion
        if motion is None:
            return state.q[: kn.N_FIXED].copy()
        # transport the reference frame of edge 0 to its new tangent first
        pos = motion.apply(self.initial.geometry.positions[:2], t_new)
        t_new0 = (pos[1] - pos[0]) / np.linalg.norm(pos[1] - pos[0])
        _, t_old = kn.compute_edges(state.geometry.positions[:2])
        d1 = kn.time_parallel_transport(state.d1[:1], t_old, t_new0[None])[0]
        return _root_dofs(self.initial, motion, t_new, d1)

    def step(self, state):
        """Advance by one Newton step of length ``config.h``."""
        h = self.config.h
        q, qdot = state.q, state.velocity
        t_new = self.time + h
        fixed = self._scripted(state, t_new)
        q_star = predict(q, qdot, self.mass, self.f_ext, h, fixed)

        _, grad_e = elastic_energy_gradient(state, self.rest, self.params)
        grad = self.mass.diag * (q - q_star) / h**2 + grad_e
        H = elastic_hessian(state, self.rest, self.params, project=self.config.project_hessian)
        nf = kn.N_FIXED
        dfix = fixed - q[:nf]
        H_ff = H[nf:, nf:] + sp.diags(self.mass.free_diag / h**2)
        rhs = -grad[nf:] - H[nf:, :nf] @ dfix
        if self._order is None:
            self._order = fill_reducing_order(H_ff)
        dq_free = BandedCholesky(H_ff, self._order).solve(rhs)

        q_new = q.copy()
        q_new[:nf] = fixed
        q_new[nf:] += dq_free
        new = state.with_q(q_new, velocity=(q_new - q) / h)
        self.time = t_new
        return new

    def frame(self, state):
        """Advance one output frame (``substeps`` Newton steps)."""
        for _ in range(self.config.substeps):
            state = self.step(state)
        return state


def step(state, rest, params, config, mass=None, load=None):
    """One Newton step of length ``config.h`` starting at ``t = 0``."""
    return Integrator(state, rest, params, config, mass, load).step(state)


@dataclass
class FrameMetrics:
    time: np.ndarray
    max_drift: np.ndarray
    tip_drift: np.ndarray
    tip_displacement: np.ndarray
    kinetic_energy: np.ndarray

    def as_columns(self):
        return {
            "frame": np.arange(len(self.time)),
            "time": self.time,
            "max_drift": self.max_drift,
            "tip_drift": self.tip_drift,
            "tip_dx": self.tip_displacement[:, 0],
            "tip_dy": self.tip_displacement[:, 1],
            "tip_dz": self.tip_displacement[:, 2],
            "kinetic_energy": self.kinetic_energy,
        }


@dataclass
class Trajectory:
    """Generalized positions per frame (frame 0 is the initial state)."""

    q: np.ndarray
    metrics: FrameMetrics
    final: kn.StrandState

    @property
    def positions(self):
        n = (self.q.shape[1] + 1) // 4
        return self.q[:, kn.vertex_dofs(n)]


def simulate(state, rest, params, config, mass=None, load=None, callback=None):
    """Run ``config.step_count`` frames; returns a ``Trajectory``.

    ``callback(frame_index, state)`` is invoked after every frame if given.
    """
    integ = Integrator(state, rest, params, config, mass, load)
    x0 = state.geometry.positions
    qs = [state.q]
    times = [0.0]
    ke = [kinetic_energy(state, integ.mass)]
    cur = state
    for k in range(config.step_count):
        cur = integ.frame(cur)
        qs.append(cur.q)
        times.append(integ.time)
        ke.append(kinetic_energy(cur, integ.mass))
        if callback is not None:
            callback(k + 1, cur)
    q = np.array(qs)
    n = state.n_vertices
    pos = q[:, kn.vertex_dofs(n)]
    disp = pos - x0[None]
    drift = np.linalg.norm(disp, axis=2)
    metrics = FrameMetrics(
        time=np.array(times),
        max_drift=drift.max(axis=1),
        tip_drift=drift[:, -1],
        tip_displacement=disp[:, -1],
        kinetic_energy=np.array(ke),
    )
    return Trajectory(q, metrics, cur)


def kinetic_energy(state, mass):
    return 0.5 * float(np.dot(mass.diag * state.velocity, state.velocity))


def equilibrium_residual(state, rest, params, load, mass=None):
    """``|f|_{M^-1}`` over the free DOFs: zero exactly at static equilibrium."""
    if mass is None:
        lengths, _ = kn.compute_edges(state.geometry.positions)
        mass = kn.build_mass_matrix(lengths, params)
    _, grad = elastic_energy_gradient(state, rest, params)
    f = (external_force(mass, load).full - grad)[mass.free]
    return float(np.sqrt(np.dot(f / mass.free_diag, f)))
