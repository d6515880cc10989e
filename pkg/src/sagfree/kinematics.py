"""Geometry and framing of a single discrete elastic rod.

Generalized positions interleave vertices and edge angles,
``q = [x_0, theta_0, x_1, theta_1, ..., theta_{N-2}, x_{N-1}]`` (length 4N-1).
The root clamp fixes ``x_0, theta_0, x_1``, i.e. the first seven entries of q.

Curvature convention: ``kappa_i = (kb.m2^{i-1}, -kb.m1^{i-1}, kb.m2^i, -kb.m1^i)``
with ``kb = 2 t_{i-1} x t_i / (1 + t_{i-1}.t_i)``.  Reference frames follow
time-parallel transport, so first-order frame changes are rotation free about
the tangent; all gradients below are derivatives under that convention.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateEdge, NonPositiveRestLength, TangentReversal

EPS_TANGENT = 1e-6
EPS_LENGTH = 1e-12
N_FIXED = 7  # x_0 (3) + theta_0 (1) + x_1 (3)


def dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def cross_matrix(v):
    """Batched skew matrices with ``cross_matrix(a) @ b == a x b``."""
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def pack_q(positions, thetas):
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    q = np.zeros(4 * n - 1)
    q[vertex_dofs(n)] = positions
    q[edge_dofs(n)] = thetas
    return q


def unpack_q(q):
    q = np.asarray(q, dtype=float)
    n = (len(q) + 1) // 4
    return q[vertex_dofs(n)], q[edge_dofs(n)]


def vertex_dofs(n):
    """(n, 3) index array of vertex coordinates inside q."""
    return 4 * np.arange(n)[:, None] + np.arange(3)


def edge_dofs(n):
    return 4 * np.arange(n - 1) + 3


def stencil_dofs(n):
    """(n-2, 11) indices of ``(x_{i-1}, theta_{i-1}, x_i, theta_i, x_{i+1})``."""
    return 4 * np.arange(n - 2)[:, None] + np.arange(11)


@dataclass(frozen=True)
class StrandGeometry:
    positions: np.ndarray
    thetas: np.ndarray = None

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")
        if len(x) < 3:
            raise ValueError(f"a strand needs at least 3 vertices, got {len(x)}")
        th = np.zeros(len(x) - 1) if self.thetas is None else np.array(self.thetas, dtype=float)
        if th.shape != (len(x) - 1,):
            raise ValueError(f"expected {len(x) - 1} edge angles, got {th.shape}")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "thetas", th)

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def q(self):
        return pack_q(self.positions, self.thetas)

    @classmethod
    def from_q(cls, q):
        return cls(*unpack_q(q))

    def validate(self, eps_tangent=EPS_TANGENT):
        _, t = compute_edges(self.positions)
        check_tangents(t, eps_tangent)
        return self


def compute_edges(positions):
    """Edge lengths and unit tangents; raises DegenerateEdge on zero-length edges."""
    e = np.diff(np.asarray(positions, dtype=float), axis=0)
    lengths = np.linalg.norm(e, axis=1)
    bad = np.flatnonzero(lengths <= EPS_LENGTH)
    if bad.size:
        raise DegenerateEdge(bad[0], lengths[bad[0]])
    return lengths, e / lengths[:, None]


def check_tangents(tangents, eps_tangent=EPS_TANGENT):
    chi = 1.0 + dot(tangents[:-1], tangents[1:])
    bad = np.flatnonzero(chi <= eps_tangent)
    if bad.size:
        raise TangentReversal(bad[0] + 1, chi[bad[0]])
    return chi


def parallel_transport(u, a, b):
    """Rotate ``u`` by the minimal rotation taking unit vector ``a`` to ``b``.

    Broadcasts over leading axes.  The caller guarantees ``1 + a.b > 0``.
    """
    u, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (u, a, b)))
    w = np.cross(a, b)
    c = dot(a, b)
    out = (
        c[..., None] * u
        + np.cross(w, u)
        + w * (dot(w, u) / (1.0 + c))[..., None]
    )
    still = np.linalg.norm(w, axis=-1) < 1e-12
    return np.where((still & (c > 0))[..., None], u, out)


def _orthonormalize(d1, t):
    d1 = d1 - dot(d1, t)[..., None] * t
    return d1 / np.linalg.norm(d1, axis=-1, keepdims=True)


def signed_angle(u, v, axis):
    return np.arctan2(dot(np.cross(u, v), axis), dot(u, v))


def seed_frame(t0):
    """Deterministic first-edge director: the global axis least aligned with t0."""
    axis = np.eye(3)[np.argmin(np.abs(t0))]
    return _orthonormalize(axis, t0)


def init_reference_frames(geometry):
    """Space-parallel transport of a seeded director along the strand.

    Returns d1 with shape (N-1, 3); ``d2 = t x d1``.
    """
    _, t = compute_edges(geometry.positions)
    check_tangents(t)
    d1 = np.empty_like(t)
    d1[0] = seed_frame(t[0])
    for i in range(1, len(t)):
        d1[i] = _orthonormalize(parallel_transport(d1[i - 1], t[i - 1], t[i]), t[i])
    return d1


def time_parallel_transport(d1_old, t_old, t_new):
    moved = _orthonormalize(parallel_transport(d1_old, t_old, t_new), t_new)
    # untouched edges keep their director bit for bit
    same = np.all(np.asarray(t_old) == np.asarray(t_new), axis=-1)
    return np.where(same[..., None], d1_old, moved)


def reference_twist(d1, tangents, previous=None):
    """Angle about t_i from the space-transported d1^{i-1} to d1^i.

    With ``previous`` the result is unwrapped onto the branch nearest to it.
    """
    u = parallel_transport(d1[:-1], tangents[:-1], tangents[1:])
    psi = signed_angle(u, d1[1:], tangents[1:])
    if previous is not None:
        psi = psi + 2 * np.pi * np.round((previous - psi) / (2 * np.pi))
    return psi


def material_frames(d1, tangents, thetas):
    d2 = np.cross(tangents, d1)
    c, s = np.cos(thetas)[:, None], np.sin(thetas)[:, None]
    return c * d1 + s * d2, -s * d1 + c * d2


def curvature_binormal(tangents):
    t0, t1 = tangents[:-1], tangents[1:]
    return 2.0 * np.cross(t0, t1) / (1.0 + dot(t0, t1))[:, None]


def material_curvature(kb, m1, m2):
    """(N-2, 4) curvature: kb projected on the frames of edges i-1 and i."""
    return np.stack(
        [dot(kb, m2[:-1]), -dot(kb, m1[:-1]), dot(kb, m2[1:]), -dot(kb, m1[1:])],
        axis=1,
    )


@dataclass(frozen=True)
class StrandState:
    """Forward-simulation unknowns plus the framing that evolves with them."""

    geometry: StrandGeometry
    velocity: np.ndarray = None
    d1: np.ndarray = None
    ref_twist: np.ndarray = None

    def __post_init__(self):
        n = self.geometry.n_vertices
        if self.velocity is None:
            object.__setattr__(self, "velocity", np.zeros(4 * n - 1))
        if self.d1 is None:
            object.__setattr__(self, "d1", init_reference_frames(self.geometry))
        if self.ref_twist is None:
            _, t = compute_edges(self.geometry.positions)
            object.__setattr__(self, "ref_twist", reference_twist(self.d1, t))

    @classmethod
    def from_positions(cls, positions, thetas=None):
        return cls(StrandGeometry(positions, thetas).validate())

    @property
    def n_vertices(self):
        return self.geometry.n_vertices

    @property
    def q(self):
        return self.geometry.q

    def with_q(self, q, velocity=None):
        """Move to new generalized positions, time-transporting the frames."""
        geometry = StrandGeometry.from_q(q)
        _, t_old = compute_edges(self.geometry.positions)
        _, t_new = compute_edges(geometry.positions)
        check_tangents(t_new)
        d1 = time_parallel_transport(self.d1, t_old, t_new)
        psi = reference_twist(d1, t_new, previous=self.ref_twist)
        return replace(
            self,
            geometry=geometry,
            velocity=self.velocity if velocity is None else np.asarray(velocity, float),
            d1=d1,
            ref_twist=psi,
        )


@dataclass(frozen=True)
class Kinematics:
    lengths: np.ndarray
    tangents: np.ndarray
    d1: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    kb: np.ndarray
    kappa: np.ndarray
    ref_twist: np.ndarray
    twist: np.ndarray
    chi: np.ndarray = field(repr=False)

    @property
    def d2(self):
        return np.cross(self.tangents, self.d1)

    @property
    def turning_angles(self):
        c = np.clip(dot(self.tangents[:-1], self.tangents[1:]), -1.0, 1.0)
        return np.arccos(c)


def evaluate(state, eps_tangent=EPS_TANGENT):
    """Edges, frames, curvature and twist of ``state``."""
    lengths, t = compute_edges(state.geometry.positions)
    chi = check_tangents(t, eps_tangent)
    th = state.geometry.thetas
    m1, m2 = material_frames(state.d1, t, th)
    kb = curvature_binormal(t)
    return Kinematics(
        lengths=lengths,
        tangents=t,
        d1=state.d1,
        m1=m1,
        m2=m2,
        kb=kb,
        kappa=material_curvature(kb, m1, m2),
        ref_twist=state.ref_twist,
        twist=th[1:] - th[:-1] + state.ref_twist,
        chi=chi,
    )


def compute_twist(thetas, ref_twist):
    return thetas[1:] - thetas[:-1] + ref_twist


def binormal_jacobians(t0, t1, l0, l1, kb, chi):
    """d kb / d e^{i-1} and d kb / d e^i, each (..., 3, 3)."""
    c = chi[..., None, None]
    outer = kb[..., :, None] * ((t0 + t1) / chi[..., None])[..., None, :]
    a0 = (-2.0 * cross_matrix(t1) / c - outer) / l0[..., None, None]
    a1 = (2.0 * cross_matrix(t0) / c - outer) / l1[..., None, None]
    return a0, a1


def stencil_curvature_jacobian(t0, t1, l0, l1, kb, chi, ma, mb, kappa):
    """Curvature Jacobian for stencils given as flat arrays; ``ma = (m1, m2)`` of edge i-1."""
    a0, a1 = binormal_jacobians(t0, t1, l0, l1, kb, chi)
    by_vertex = (-a0, a0 - a1, a1)  # d kb / d x_{i-1}, x_i, x_{i+1}
    jac = np.zeros(kb.shape[:-1] + (4, 11))
    for pair, (m1, m2) in enumerate((ma, mb)):
        for offset, a in zip((0, 4, 8), by_vertex):
            jac[..., 2 * pair, offset:offset + 3] = np.einsum("...i,...ij->...j", m2, a)
            jac[..., 2 * pair + 1, offset:offset + 3] = -np.einsum("...i,...ij->...j", m1, a)
    # d m1/d theta = m2, d m2/d theta = -m1
    jac[..., 0, 3] = kappa[..., 1]
    jac[..., 1, 3] = -kappa[..., 0]
    jac[..., 2, 7] = kappa[..., 3]
    jac[..., 3, 7] = -kappa[..., 2]
    return jac


def stencil_twist_gradient(l0, l1, kb):
    g0 = kb / (2.0 * l0[..., None])
    g1 = kb / (2.0 * l1[..., None])
    grad = np.zeros(kb.shape[:-1] + (11,))
    grad[..., 0:3] = -g0
    grad[..., 3] = -1.0
    grad[..., 4:7] = g0 - g1
    grad[..., 7] = 1.0
    grad[..., 8:11] = g1
    return grad


def curvature_gradient(kin):
    """Jacobian of every kappa_i over its 11-variable stencil, shape (N-2, 4, 11)."""
    return stencil_curvature_jacobian(
        kin.tangents[:-1], kin.tangents[1:], kin.lengths[:-1], kin.lengths[1:],
        kin.kb, kin.chi,
        (kin.m1[:-1], kin.m2[:-1]), (kin.m1[1:], kin.m2[1:]),
        kin.kappa,
    )


def twist_gradient(kin):
    """Gradient of every twist m_i over its 11-variable stencil, shape (N-2, 11)."""
    return stencil_twist_gradient(kin.lengths[:-1], kin.lengths[1:], kin.kb)


@dataclass(frozen=True)
class MaterialParams:
    rho: float = 1e3
    radius: float = 1e-3
    c_stretch: float = 1e8
    c_bend: float = 1e8
    c_twist: float = 1e8

    def __post_init__(self):
        for name in ("rho", "radius", "c_stretch", "c_bend", "c_twist"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def area(self):
        return np.pi * self.radius**2

    @property
    def k_stretch(self):
        return self.c_stretch * self.area

    @property
    def k_bend(self):
        """Numerator of the bending coefficient, c_bend pi r^4 / 4."""
        return self.c_bend * np.pi * self.radius**4 / 4.0

    @property
    def k_twist(self):
        return self.c_twist * np.pi * self.radius**4


@dataclass(frozen=True)
class GeneralizedMass:
    """Diagonal mass over q.  Clamped DOFs are excluded through ``free``."""

    diag: np.ndarray

    @property
    def n_vertices(self):
        return (len(self.diag) + 1) // 4

    @property
    def free(self):
        return slice(N_FIXED, None)

    @property
    def free_diag(self):
        return self.diag[N_FIXED:]

    @property
    def vertex_masses(self):
        return self.diag[vertex_dofs(self.n_vertices)[:, 0]]

    @property
    def edge_inertias(self):
        return self.diag[edge_dofs(self.n_vertices)]


def build_mass_matrix(rest_lengths, params):
    """Lumped vertex masses and edge inertias from rest lengths.

    Entries of clamped DOFs are left at their formula values but are never
    used: consumers go through ``GeneralizedMass.free``.
    """
    lb = np.asarray(rest_lengths, dtype=float)
    if np.any(lb <= 0):
        raise NonPositiveRestLength("rest lengths must be positive")
    n = len(lb) + 1
    padded = np.concatenate([[0.0], lb, [0.0]])
    masses = params.rho * params.area * 0.5 * (padded[:-1] + padded[1:])
    inertia = 0.5 * params.rho * np.pi * params.radius**4 * lb
    diag = np.zeros(4 * n - 1)
    diag[vertex_dofs(n)] = masses[:, None]
    diag[edge_dofs(n)] = inertia
    return GeneralizedMass(diag)
