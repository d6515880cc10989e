"""Rest-shape optimization for static equilibrium under gravity.

The unknown is ``s = [l_1 .. l_{N-2}, kappa (4(N-2)), m (N-2)]`` (rest lengths,
curvatures, twists; the clamped first edge keeps its rest length).  With the
strand geometry held fixed, the generalized force ``f(s)`` is cheap to
evaluate and ``F(s) = 1/2 |f|^2_W + alpha/2 |s - s0|^2 + F_box(s)`` is
minimized by Gauss-Newton with a quadratic penalty for box bounds.  ``W`` is
the inverse mass (the kinetic-energy norm) or the identity (force norm).
The timestep cancels from every term and never enters.
"""
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kinematics as kn
from .errors import SolveFailure
from .elastic import RestShape, bend_coefficients, external_force, twist_coefficients
from .linalg import BandedCholesky, fill_reducing_order, nonzero_magnitudes

OBJECTIVE_KINDS = ("kinetic_norm", "force_norm", "force_norm_equilibrated")
OPTIMIZER_KINDS = ("gauss_newton", "gradient_descent")


@dataclass(frozen=True)
class OptimizerSettings:
    alpha: float = 1e-5
    beta: float = 1e6
    epsilon: float = 1e-5
    max_iters: int = 500
    a_min: float = 0.1
    a_max: float = 1.1
    delta_kappa: float = float(np.sqrt(2.0))
    delta_m: float = float(np.pi / 8)
    use_bounds: bool = True
    clamp_each_iteration: bool = False
    objective_kind: str = "kinetic_norm"
    optimizer_kind: str = "gauss_newton"
    include_rest_twist: bool = True
    armijo: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 40
    residual_tol: float = 1e-8

    def __post_init__(self):
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"objective_kind must be one of {OBJECTIVE_KINDS}")
        if self.optimizer_kind not in OPTIMIZER_KINDS:
            raise ValueError(f"optimizer_kind must be one of {OPTIMIZER_KINDS}")
        if not (self.alpha > 0 and self.beta > 0 and self.epsilon >= 0):
            raise ValueError("alpha and beta must be positive, epsilon non-negative")
        if not 0 < self.a_min <= 1 <= self.a_max:
            raise ValueError("need 0 < a_min <= 1 <= a_max")


def turning_angle_to_curvature_delta(delta_phi):
    """Curvature-component change matching a turning-angle change at a straight vertex."""
    if abs(delta_phi) >= np.pi:
        raise ValueError("|delta_phi| must be below pi")
    return float(np.sqrt(2.0) * abs(np.tan(delta_phi / 2.0)))


@dataclass(frozen=True)
class RestLayout:
    """Packing between RestShape and the optimization vector."""

    n_vertices: int
    include_twist: bool = True

    @property
    def n_interior(self):
        return self.n_vertices - 2

    @property
    def size(self):
        return (6 if self.include_twist else 5) * self.n_interior

    @property
    def lengths(self):
        return slice(0, self.n_interior)

    @property
    def kappa(self):
        return slice(self.n_interior, 5 * self.n_interior)

    @property
    def twist(self):
        return slice(5 * self.n_interior, 6 * self.n_interior)

    def pack(self, rest):
        parts = [rest.lengths[1:], rest.kappa.ravel()]
        if self.include_twist:
            parts.append(rest.twist)
        return np.concatenate(parts)

    def unpack(self, s, template):
        """RestShape from ``s``; the first rest length (and the rest twist when
        excluded) come from ``template``."""
        lengths = np.concatenate([[template.lengths[0]], s[self.lengths]])
        twist = s[self.twist] if self.include_twist else template.twist
        return RestShape(lengths, s[self.kappa].reshape(-1, 4), twist)


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray


def make_box_bounds(initial, settings, include_twist=None):
    include_twist = settings.include_rest_twist if include_twist is None else include_twist
    layout = RestLayout(initial.n_vertices, include_twist)
    lb = initial.lengths[1:]
    k = initial.kappa.ravel()
    lower = [settings.a_min * lb, k - settings.delta_kappa]
    upper = [settings.a_max * lb, k + settings.delta_kappa]
    if include_twist:
        lower.append(initial.twist - settings.delta_m)
        upper.append(initial.twist + settings.delta_m)
    bounds = BoxBounds(np.concatenate(lower), np.concatenate(upper))
    assert len(bounds.lower) == layout.size
    return bounds


class StaticProblem:
    """Generalized force and its rest-shape Jacobian for a fixed geometry.

    Curvature/twist Jacobians depend only on the geometry, so they are
    computed once; ``forces`` and ``jacobian`` are then cheap in ``rest``.
    ``mass`` is frozen (by default from the current edge lengths).
    """

    def __init__(self, state, params, load, mass=None):
        self.state = state
        self.params = params
        self.n = state.n_vertices
        self.kin = kn.evaluate(state)
        if mass is None:
            mass = kn.build_mass_matrix(self.kin.lengths, params)
        self.mass = mass
        self.f_ext = external_force(mass, load).free
        self.jac_curv = kn.curvature_gradient(self.kin)
        self.grad_m = kn.twist_gradient(self.kin)
        self._stencil_rows = kn.stencil_dofs(self.n) - kn.N_FIXED
        vd = kn.vertex_dofs(self.n) - kn.N_FIXED
        self._tail_rows = vd[2:]   # x_{i+1} for edges i >= 1
        self._head_rows = vd[1:-1]  # x_i

    @property
    def n_free(self):
        return 4 * self.n - 8

    def forces(self, rest):
        """Free-DOF generalized force ``f_ext - dE/dq`` at ``rest``."""
        p, kin = self.params, self.kin
        full = np.zeros(4 * self.n - 1)
        vd = kn.vertex_dofs(self.n)
        g = (p.k_stretch * (kin.lengths[1:] / rest.lengths[1:] - 1.0))[:, None] * kin.tangents[1:]
        full[vd[2:]] -= g
        full[vd[1:-1]] += g
        cb = bend_coefficients(rest, p)
        ct = twist_coefficients(rest, p)
        stencil = cb[:, None] * np.einsum("nk,nkj->nj", kin.kappa - rest.kappa, self.jac_curv)
        stencil += (ct * (kin.twist - rest.twist))[:, None] * self.grad_m
        np.add.at(full, kn.stencil_dofs(self.n), -stencil)
        return self.f_ext + full[kn.N_FIXED:]

    def jacobian(self, rest, include_twist=True):
        """Sparse ``d f / d s``, shape (4N-8, 6N-12) or (4N-8, 5N-10)."""
        p, kin = self.params, self.kin
        ni = self.n - 2
        layout = RestLayout(self.n, include_twist)
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c, v = np.broadcast_arrays(r, c, v)
            keep = r >= 0
            rows.append(r[keep])
            cols.append(c[keep])
            vals.append(v[keep])

        # stretching of edge i (column i-1)
        v = (p.k_stretch * kin.lengths[1:] / rest.lengths[1:] ** 2)[:, None] * kin.tangents[1:]
        c = np.arange(ni)[:, None]
        add(self._tail_rows, c, v)
        add(self._head_rows, c, -v)

        s_sum = rest.lengths[:-1] + rest.lengths[1:]
        dk = kin.kappa - rest.kappa
        length_col = (p.k_bend / s_sum**2)[:, None] * np.einsum("nk,nkj->nj", dk, self.jac_curv)
        length_col += (p.k_twist / s_sum**2 * (kin.twist - rest.twist))[:, None] * self.grad_m
        sr = self._stencil_rows
        # stencil i depends on l_{i-1} (column i-2, absent for i = 1) and l_i (column i-1)
        add(sr[1:], np.arange(ni - 1)[:, None], length_col[1:])
        add(sr, np.arange(ni)[:, None], length_col)

        cb = bend_coefficients(rest, p)
        kcols = layout.kappa.start + 4 * np.arange(ni)[:, None] + np.arange(4)
        add(sr[:, None, :], kcols[:, :, None], cb[:, None, None] * self.jac_curv)

        if include_twist:
            ct = twist_coefficients(rest, p)
            add(sr, (layout.twist.start + np.arange(ni))[:, None], ct[:, None] * self.grad_m)

        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_free, layout.size),
        ).tocsr()

    def residual_norms(self, rest):
        f = self.forces(rest)
        return float(np.linalg.norm(f)), float(np.sqrt(np.sum(f**2 / self.mass.free_diag)))


def rest_jacobian(state, rest, params, load=None, include_twist=True):
    from .elastic import ExternalLoad

    return StaticProblem(state, params, load or ExternalLoad()).jacobian(rest, include_twist)


class Objective:
    """``F``, its gradient and the Gauss-Newton matrix over the rest vector."""

    def __init__(self, problem, initial, settings, bounds=None):
        self.problem = problem
        self.settings = settings
        self.initial = initial
        self.layout = RestLayout(problem.n, settings.include_rest_twist)
        self.s0 = self.layout.pack(initial)
        if bounds is None and settings.use_bounds:
            bounds = make_box_bounds(initial, settings)
        self.bounds = bounds
        if settings.objective_kind == "kinetic_norm":
            self.weights = 1.0 / problem.mass.free_diag
        else:
            self.weights = np.ones(problem.n_free)

    def rest(self, s):
        return self.layout.unpack(s, self.initial)

    def _violations(self, s):
        if self.bounds is None:
            z = np.zeros_like(s)
            return z, z
        return np.maximum(s - self.bounds.upper, 0.0), np.maximum(self.bounds.lower - s, 0.0)

    def value(self, s):
        if np.any(s[self.layout.lengths] <= 0):
            return np.inf  # outside the domain; forces a backtrack
        f = self.problem.forces(self.rest(s))
        over, under = self._violations(s)
        st = self.settings
        return (
            0.5 * np.dot(self.weights * f, f)
            + 0.5 * st.alpha * np.sum((s - self.s0) ** 2)
            + 0.5 * st.beta * (np.sum(over**2) + np.sum(under**2))
        )

    def evaluate(self, s, need_hessian=True):
        """Return ``(F, grad, A, J)``; ``A`` is the GN matrix (None if not needed)."""
        st = self.settings
        rest = self.rest(s)
        f = self.problem.forces(rest)
        J = self.problem.jacobian(rest, self.layout.include_twist)
        over, under = self._violations(s)
        wf = self.weights * f
        F = (
            0.5 * np.dot(wf, f)
            + 0.5 * st.alpha * np.sum((s - self.s0) ** 2)
            + 0.5 * st.beta * (np.sum(over**2) + np.sum(under**2))
        )
        reg_grad = st.alpha * (s - self.s0) + st.beta * (over - under)
        grad = J.T @ wf + reg_grad
        A = None
        if need_hessian:
            active = (over > 0).astype(float) + (under > 0).astype(float)
            diag = st.alpha + st.beta * active
            A = (J.T @ sp.diags(self.weights) @ J + sp.diags(diag)).tocsr()
            self._last = (f, J, reg_grad, diag)
        return F, grad, A, J

    def augmented_step(self):
        """Gauss-Newton step of the last ``evaluate`` without forming ``J^T W J``.

        Solves the quasi-definite system ``[-W^-1 J; J^T D] [lam; ds] =
        [-f; -g_reg]`` (with ``lam = W (f + J ds)``) by sparse LU.  It has the
        same solution as ``(J^T W J + D) ds = -grad`` but squares no condition
        number.
        """
        f, J, reg_grad, diag = self._last
        K = sp.bmat([[sp.diags(-1.0 / self.weights), J], [J.T, sp.diags(diag)]], format="csc")
        x = splu(K).solve(np.concatenate([-f, -reg_grad]))
        return x[len(f):]


def objective(state, rest_vec, params, load, settings, initial=None):
    """Convenience wrapper returning ``(F, grad, GN matrix)`` at ``rest_vec``."""
    problem = StaticProblem(state, params, load)
    initial = initial or RestShape.from_state(state)
    F, g, A, _ = Objective(problem, initial, settings).evaluate(np.asarray(rest_vec, float))
    return F, g, A


def objective_force_norm(state, rest_vec, params, load, settings, equilibrated=False, initial=None):
    kind = "force_norm_equilibrated" if equilibrated else "force_norm"
    return objective(state, rest_vec, params, load, replace(settings, objective_kind=kind), initial)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    step_norm: float
    step_length: float
    halvings: int


@dataclass
class OptimizerReport:
    records: list = field(default_factory=list)
    initial_objective: float = float("nan")
    final_objective: float = float("nan")
    termination: str = ""
    status: str = ""
    iterations: int = 0
    wall_time: float = 0.0
    matrix_min: float = float("nan")
    matrix_max: float = float("nan")
    residual_l2_before: float = float("nan")
    residual_minv_before: float = float("nan")
    residual_l2: float = float("nan")
    residual_minv: float = float("nan")
    max_bound_violation: float = 0.0
    augmented_fallbacks: int = 0
    n_dofs: int = 0
    objective_kind: str = ""
    optimizer_kind: str = ""

    @property
    def sigma(self):
        return self.matrix_max / self.matrix_min if self.matrix_min > 0 else float("inf")

    @property
    def converged(self):
        return self.termination == "converged"


def _equilibrate(A):
    """Symmetric max-norm scaling ``D A D`` with ``D_ii = 1/sqrt(max_j |A_ij|)``."""
    row_max = abs(A).max(axis=1).toarray().ravel()
    d = 1.0 / np.sqrt(row_max)
    D = sp.diags(d)
    return (D @ A @ D).tocsr(), d


def _line_search(obj, s, F, grad, direction, settings):
    slope = float(np.dot(grad, direction))
    gamma = 1.0
    for halvings in range(settings.max_halvings + 1):
        trial = s + gamma * direction
        F_trial = obj.value(trial)
        if F_trial <= F + settings.armijo * gamma * slope:
            return gamma, trial, F_trial, halvings
        gamma *= settings.shrink
    return None, s, F, settings.max_halvings


def optimize(state, params, load, settings=None, mass=None, initial=None, bounds=None):
    """Find a rest shape that puts ``state`` into static equilibrium.

    ``initial`` defaults to the naive rest shape of ``state`` (warm start).
    Returns ``(RestShape, OptimizerReport)``.
    """
    settings = settings or OptimizerSettings()
    t_start = time.perf_counter()
    problem = StaticProblem(state, params, load, mass)
    initial = initial or RestShape.from_state(state)
    obj = Objective(problem, initial, settings, bounds)
    s = obj.s0.copy()
    gd = settings.optimizer_kind == "gradient_descent"
    equilibrated = settings.objective_kind == "force_norm_equilibrated"

    report = OptimizerReport(
        n_dofs=obj.layout.size,
        objective_kind=settings.objective_kind,
        optimizer_kind=settings.optimizer_kind,
    )
    report.residual_l2_before, report.residual_minv_before = problem.residual_norms(initial)
    order = None
    report.termination = "max_iterations"
    F = None
    for k in range(settings.max_iters):
        F, grad, A, _ = obj.evaluate(s, need_hessian=not gd)
        if k == 0:
            report.initial_objective = F
        if gd:
            direction = -grad
        else:
            if equilibrated:
                A, d = _equilibrate(A)
            if order is None:
                order = fill_reducing_order(A)
            report.matrix_min, report.matrix_max = nonzero_magnitudes(A)
            rhs = -d * grad if equilibrated else -grad
            try:
                x = BandedCholesky(A, order).solve(rhs)
                direction = d * x if equilibrated else x
            except SolveFailure:
                # SPD in exact arithmetic, but forming J^T W J can round the
                # alpha-sized eigenvalues away; same step from the augmented form
                report.augmented_fallbacks += 1
                direction = obj.augmented_step()
        gamma, s_new, F_new, halvings = _line_search(obj, s, F, grad, direction, settings)
        if gamma is None:
            report.records.append(
                IterationRecord(k, F, float(np.linalg.norm(grad)), 0.0, 0.0, halvings)
            )
            report.termination = "line_search_failed"
            break
        if settings.clamp_each_iteration and obj.bounds is not None:
            s_new = np.clip(s_new, obj.bounds.lower, obj.bounds.upper)
            F_new = obj.value(s_new)
        step = float(np.linalg.norm(s_new - s))
        s, F = s_new, F_new
        report.records.append(
            IterationRecord(k, F, float(np.linalg.norm(grad)), step, gamma, halvings)
        )
        if step <= settings.epsilon:
            report.termination = "converged"
            break
    report.iterations = len(report.records)
    report.final_objective = obj.value(s)
    rest = obj.rest(s)
    report.residual_l2, report.residual_minv = problem.residual_norms(rest)
    if obj.bounds is not None:
        over, under = obj._violations(s)
        report.max_bound_violation = float(max(over.max(initial=0.0), under.max(initial=0.0)))
        # pinned against a bound: within a small fraction of the box width
        slack = 1e-5 * (obj.bounds.upper - obj.bounds.lower)
        at_bound = bool(np.any(s >= obj.bounds.upper - slack) or np.any(s <= obj.bounds.lower + slack))
    else:
        at_bound = False
    if report.residual_minv < settings.residual_tol:
        report.status = "equilibrium"
    elif at_bound:
        report.status = "bound_limited"
    else:
        report.status = "not_converged"
    report.wall_time = time.perf_counter() - t_start
    return rest, report


def optimize_gd(state, params, load, settings=None, **kwargs):
    settings = replace(settings or OptimizerSettings(), optimizer_kind="gradient_descent")
    return optimize(state, params, load, settings, **kwargs)


def hanging_chain_rest_lengths(state, params, load, mass=None):
    """Closed-form rest lengths of a straight vertical strand hanging from its root.

    Each edge carries the weight of everything below it.  Returned for
    checking the optimizer; edge 0 keeps its length.
    """
    lengths, _ = kn.compute_edges(state.geometry.positions)
    if mass is None:
        mass = kn.build_mass_matrix(lengths, params)
    g = float(np.linalg.norm(load.gravity))
    weights = mass.vertex_masses * g
    for i, force in load.point_forces.items():
        weights[int(i)] += float(np.linalg.norm(force))
    below = np.cumsum(weights[::-1])[::-1]  # below[j] = sum_{k >= j}
    tension = below[1:]  # edge i carries vertices i+1 ..
    rest = lengths / (1.0 + tension / params.k_stretch)
    rest[0] = lengths[0]
    return rest
