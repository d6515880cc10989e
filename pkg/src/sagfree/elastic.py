"""DER energies, generalized forces and the position Hessian of one strand."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kinematics as kn
from .errors import NonPositiveRestLength

DEFAULT_GRAVITY = (0.0, -9.81, 0.0)


@dataclass(frozen=True)
class RestShape:
    """Rest lengths (N-1), rest curvatures (N-2, 4) and rest twists (N-2)."""

    lengths: np.ndarray
    kappa: np.ndarray
    twist: np.ndarray

    def __post_init__(self):
        lb = np.array(self.lengths, dtype=float)
        kb = np.array(self.kappa, dtype=float).reshape(-1, 4)
        mb = np.array(self.twist, dtype=float)
        if np.any(lb <= 0):
            raise NonPositiveRestLength("rest lengths must be positive")
        if not (len(kb) == len(mb) == len(lb) - 1):
            raise ValueError("inconsistent rest-shape block sizes")
        object.__setattr__(self, "lengths", lb)
        object.__setattr__(self, "kappa", kb)
        object.__setattr__(self, "twist", mb)

    @classmethod
    def from_state(cls, state):
        """Naive initialization: the current shape is the rest shape."""
        kin = kn.evaluate(state)
        return cls(kin.lengths.copy(), kin.kappa.copy(), kin.twist.copy())

    @property
    def n_vertices(self):
        return len(self.lengths) + 1


@dataclass(frozen=True)
class ExternalLoad:
    """Gravity plus constant point forces ``{vertex index: force}``."""

    gravity: tuple = DEFAULT_GRAVITY
    point_forces: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=float)
        if g.shape != (3,) or not np.all(np.isfinite(g)):
            raise ValueError("gravity must be a finite 3-vector")
        for f in self.point_forces.values():
            if not np.all(np.isfinite(f)):
                raise ValueError("point forces must be finite")

    def without_gravity(self):
        return ExternalLoad((0.0, 0.0, 0.0), dict(self.point_forces))


@dataclass(frozen=True)
class GeneralizedForce:
    """A force over q; clamped entries are held at zero."""

    full: np.ndarray

    @property
    def free(self):
        return self.full[kn.N_FIXED:]


def stretch_coefficients(rest, params):
    return params.k_stretch / rest.lengths


def bend_coefficients(rest, params):
    return params.k_bend / (rest.lengths[:-1] + rest.lengths[1:])


def twist_coefficients(rest, params):
    return params.k_twist / (rest.lengths[:-1] + rest.lengths[1:])


def _scatter_stencils(n, stencil_values):
    out = np.zeros(4 * n - 1)
    np.add.at(out, kn.stencil_dofs(n), stencil_values)
    return out


def stretch_energy_gradient(kin, rest, params):
    """Energy and q-gradient of stretching; edge 0 is clamped and excluded."""
    n = len(kin.lengths) + 1
    l, lb, t = kin.lengths[1:], rest.lengths[1:], kin.tangents[1:]
    energy = 0.5 * np.sum(params.k_stretch / lb * (l - lb) ** 2)
    g = (params.k_stretch * (l / lb - 1.0))[:, None] * t
    grad = np.zeros(4 * n - 1)
    vd = kn.vertex_dofs(n)
    grad[vd[2:]] += g
    grad[vd[1:-1]] -= g
    return energy, grad


def bend_energy_gradient(kin, rest, params, jac=None):
    n = len(kin.lengths) + 1
    if jac is None:
        jac = kn.curvature_gradient(kin)
    coef = bend_coefficients(rest, params)
    dk = kin.kappa - rest.kappa
    energy = 0.5 * np.sum(coef * np.sum(dk**2, axis=1))
    stencil = coef[:, None] * np.einsum("nk,nkj->nj", dk, jac)
    return energy, _scatter_stencils(n, stencil)


def twist_energy_gradient(kin, rest, params, grad_m=None):
    n = len(kin.lengths) + 1
    if grad_m is None:
        grad_m = kn.twist_gradient(kin)
    coef = twist_coefficients(rest, params)
    dm = kin.twist - rest.twist
    energy = 0.5 * np.sum(coef * dm**2)
    return energy, _scatter_stencils(n, (coef * dm)[:, None] * grad_m)


def elastic_energy_gradient(state, rest, params):
    kin = kn.evaluate(state)
    parts = (
        stretch_energy_gradient(kin, rest, params),
        bend_energy_gradient(kin, rest, params),
        twist_energy_gradient(kin, rest, params),
    )
    return sum(p[0] for p in parts), sum(p[1] for p in parts)


def inertia_energy_gradient(q, q_star, mass, dt):
    """Inertia objective and gradient over the free DOFs (clamped entries zero)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    dq = np.zeros_like(np.asarray(q, dtype=float))
    dq[mass.free] = (np.asarray(q) - np.asarray(q_star))[mass.free]
    weighted = mass.diag * dq / dt**2
    return 0.5 * np.dot(dq, weighted), weighted


def external_force(mass, load):
    """Generalized external force: ``m_i g`` plus point loads on vertices.

    Under static equilibrium this is also the inertia force, independent of dt.
    """
    n = mass.n_vertices
    f = np.zeros(4 * n - 1)
    vd = kn.vertex_dofs(n)
    f[vd] = mass.vertex_masses[:, None] * np.asarray(load.gravity, dtype=float)
    for i, force in load.point_forces.items():
        f[vd[int(i)]] += np.asarray(force, dtype=float)
    f[:kn.N_FIXED] = 0.0
    return GeneralizedForce(f)


static_inertia_force = external_force


def total_force(state, rest, params, load, mass):
    """``f_ext - grad(E_stretch + E_bend + E_twist)`` with clamped entries zeroed."""
    _, grad = elastic_energy_gradient(state, rest, params)
    f = external_force(mass, load).full - grad
    f[:kn.N_FIXED] = 0.0
    return GeneralizedForce(f)


# --- Hessian -----------------------------------------------------------------

def _stretch_hessian_blocks(kin, rest, params, project):
    l, lb, t = kin.lengths[1:], rest.lengths[1:], kin.tangents[1:]
    k = params.k_stretch / lb
    tt = t[:, :, None] * t[:, None, :]
    transverse = 1.0 - lb / l
    if project:
        transverse = np.maximum(transverse, 0.0)
    return k[:, None, None] * (tt + transverse[:, None, None] * (np.eye(3) - tt))


def _stencil_gradients(X, base, rest, params):
    """Bend + twist gradient of every stencil as a function of its own 11 variables.

    ``X`` has shape (..., S, 11).  Frames are time-transported from ``base``.
    """
    x0, th0, x1, th1, x2 = X[..., 0:3], X[..., 3], X[..., 4:7], X[..., 7], X[..., 8:11]
    e0, e1 = x1 - x0, x2 - x1
    l0, l1 = np.linalg.norm(e0, axis=-1), np.linalg.norm(e1, axis=-1)
    t0, t1 = e0 / l0[..., None], e1 / l1[..., None]
    t0b, t1b, d1a, d1b, psib = base
    da = kn.time_parallel_transport(d1a, t0b, t0)
    db = kn.time_parallel_transport(d1b, t1b, t1)
    u = kn.parallel_transport(da, t0, t1)
    psi = kn.signed_angle(u, db, t1)
    psi = psi + 2 * np.pi * np.round((psib - psi) / (2 * np.pi))

    def frame(d1, t, th):
        d2 = np.cross(t, d1)
        c, s = np.cos(th)[..., None], np.sin(th)[..., None]
        return c * d1 + s * d2, -s * d1 + c * d2

    ma, mb = frame(da, t0, th0), frame(db, t1, th1)
    chi = 1.0 + kn.dot(t0, t1)
    kb = 2.0 * np.cross(t0, t1) / chi[..., None]
    kappa = np.stack(
        [kn.dot(kb, ma[1]), -kn.dot(kb, ma[0]), kn.dot(kb, mb[1]), -kn.dot(kb, mb[0])],
        axis=-1,
    )
    jac = kn.stencil_curvature_jacobian(t0, t1, l0, l1, kb, chi, ma, mb, kappa)
    gm = kn.stencil_twist_gradient(l0, l1, kb)
    cb = bend_coefficients(rest, params)
    ct = twist_coefficients(rest, params)
    m = th1 - th0 + psi
    gb = cb[..., None] * np.einsum("...k,...kj->...j", kappa - rest.kappa, jac)
    gt = (ct * (m - rest.twist))[..., None] * gm
    return gb + gt


def _bend_twist_hessian_blocks(state, rest, params, project):
    n = state.n_vertices
    kin = kn.evaluate(state)
    X = state.q[kn.stencil_dofs(n)]
    base = (kin.tangents[:-1], kin.tangents[1:], kin.d1[:-1], kin.d1[1:], kin.ref_twist)
    steps = np.full(11, 1e-4 * float(np.mean(kin.lengths)))
    steps[[3, 7]] = 1e-4
    s = len(X)
    # all 22 perturbations of all stencils in one vectorized call
    pert = np.zeros((22, s, 11))
    pert[np.arange(11), :, np.arange(11)] = steps[:, None]
    pert[11 + np.arange(11), :, np.arange(11)] = -steps[:, None]
    g = _stencil_gradients(X[None] + pert, tuple(np.broadcast_to(b, (22,) + b.shape) for b in base), rest, params)
    H = (g[:11] - g[11:]) / (2.0 * steps[:, None, None])  # (11 columns, S, 11 rows)
    H = np.transpose(H, (1, 2, 0))
    H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
    if project:
        H = project_psd(H)
    return H


def project_psd(blocks):
    w, v = np.linalg.eigh(blocks)
    return np.einsum("...ij,...j,...kj->...ik", v, np.maximum(w, 0.0), v)


def elastic_hessian(state, rest, params, project=True):
    """Hessian of the elastic energies over the full q, as CSR.

    Bend/twist stencils are differentiated by central differences of their
    analytic gradient; stretching is analytic.  With ``project`` each element
    block is clamped to be positive semidefinite.
    """
    n = state.n_vertices
    kin = kn.evaluate(state)
    rows, cols, vals = [], [], []

    hs = _stretch_hessian_blocks(kin, rest, params, project)
    vd = kn.vertex_dofs(n)
    edge_idx = np.concatenate([vd[1:-1], vd[2:]], axis=1)  # (N-2, 6)
    block = np.concatenate(
        [np.concatenate([hs, -hs], axis=2), np.concatenate([-hs, hs], axis=2)], axis=1
    )
    rows.append(np.repeat(edge_idx, 6, axis=1).ravel())
    cols.append(np.tile(edge_idx, (1, 6)).ravel())
    vals.append(block.ravel())

    hb = _bend_twist_hessian_blocks(state, rest, params, project)
    sd = kn.stencil_dofs(n)
    rows.append(np.repeat(sd, 11, axis=1).ravel())
    cols.append(np.tile(sd, (1, 11)).ravel())
    vals.append(hb.ravel())

    size = 4 * n - 1
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    ).tocsr()


def position_hessian(state, rest, params, mass, dt, project=True):
    """Hessian of E_DER over the free DOFs: ``M/dt^2 + H_elastic``."""
    H = elastic_hessian(state, rest, params, project)
    free = slice(kn.N_FIXED, None)
    return (H[free, free] + sp.diags(mass.free_diag / dt**2)).tocsr()
