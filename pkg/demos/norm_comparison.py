"""Why the residual is measured in the kinetic-energy norm.

A helix mixes vertex DOFs (kg scale masses) with edge angles (inertias
about 1e6 times smaller).  Least squares on the plain force norm lets the
tiny angular residuals hide, and Gauss-Newton stalls far from
equilibrium; rescaling the system (equilibration) fixes the conditioning
number but not the answer.  Weighting by the inverse mass does both.

    python3 demos/norm_comparison.py
"""
from sagfree import kinematics as kn
from sagfree.elastic import ExternalLoad
from sagfree.restshape import OBJECTIVE_KINDS, OptimizerSettings, optimize
from sagfree.scenarios import helix

state = kn.StrandState(helix())
params = kn.MaterialParams()
print(f"{'objective':24s} {'min|A|':>9s} {'max|A|':>9s} {'sigma':>9s} {'|f|_2':>9s} {'|f|_Minv':>9s} iters")
for kind in OBJECTIVE_KINDS:
    _, rep = optimize(state, params, ExternalLoad(), OptimizerSettings(objective_kind=kind))
    print(
        f"{kind:24s} {rep.matrix_min:9.2e} {rep.matrix_max:9.2e} {rep.sigma:9.2e} "
        f"{rep.residual_l2:9.2e} {rep.residual_minv:9.2e} {rep.iterations:5d}"
    )
