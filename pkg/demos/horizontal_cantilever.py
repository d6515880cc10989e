"""A straight strand sticking out sideways.

Holding a cantilever straight against gravity takes only a change of rest
curvature: the optimizer leaves rest lengths and twists alone.  The softer
the material, the more curvature it needs.  Too soft, and the change
needed leaves the curvature box; the run then reports ``bound_limited``.

The ``drift 2 s`` column is worth a look.  The straight, pre-curved
cantilever is an unstable equilibrium for rolling out of its plane (its
out-of-plane stiffness has a negative eigenvalue below c_bend ~ 1e11), so
roundoff grows exponentially and, for the softer strands, the strand rolls
over within a couple of seconds.  The residual sets the seed, not the rate.

    python3 demos/horizontal_cantilever.py
"""
import numpy as np

from sagfree import kinematics as kn
from sagfree.elastic import ExternalLoad, RestShape
from sagfree.restshape import OptimizerSettings, optimize
from sagfree.scenarios import horizontal
from sagfree.sim import SimConfig, simulate

state = kn.StrandState(horizontal(20, 1.0))
naive = RestShape.from_state(state)
settings = OptimizerSettings(delta_kappa=10.0)
print(f"{'c_bend':>8s} {'status':>14s} {'|f|_Minv':>10s} {'max dkappa':>10s} {'dl':>9s} {'drift 2 s':>10s}")
for c in (1e7, 1e8, 1e9, 1e10):
    params = kn.MaterialParams(c_bend=c)
    rest, rep = optimize(state, params, ExternalLoad(), settings)
    drift = simulate(state, rest, params, SimConfig(step_count=120)).metrics.max_drift.max()
    print(
        f"{c:8.0e} {rep.status:>14s} {rep.residual_minv:10.3e} "
        f"{np.abs(rest.kappa - naive.kappa).max():10.3e} {np.abs(rest.lengths - naive.lengths).max():9.1e} {drift:10.3e}"
    )

# a weight hanging off the tip asks for more curvature near it
params = kn.MaterialParams(c_bend=1e9)
lengths, _ = kn.compute_edges(state.geometry.positions)
tip_weight = kn.build_mass_matrix(lengths, params).vertex_masses[-1] * np.array([0, -9.81, 0])
for label, load in (("no load", ExternalLoad()), ("10x tip", ExternalLoad(point_forces={19: 10 * tip_weight}))):
    rest, _ = optimize(state, params, load, settings)
    print(f"{label:8s} rest curvature change along the strand:",
          " ".join(f"{v:.3f}" for v in np.abs(rest.kappa - naive.kappa).max(axis=1)[::3]))
