"""A hanging strand, before and after rest-shape optimization.

With the input shape used as rest shape, gravity stretches the strand and
it sags under its own weight.  The optimizer shortens each rest length by
exactly the weight that edge carries, and the strand then hangs still.
Switching gravity off afterwards reveals the pre-tension: the strand
springs up by the total length it was given.

    python3 demos/vertical_sag.py
"""
import numpy as np

from sagfree import kinematics as kn
from sagfree.elastic import ExternalLoad, RestShape
from sagfree.restshape import hanging_chain_rest_lengths, optimize
from sagfree.scenarios import vertical
from sagfree.sim import SimConfig, simulate

state = kn.StrandState(vertical(20, 1.0))
gravity = ExternalLoad()
print(f"{'c_stretch':>10s} {'naive tip':>10s} {'optimized':>10s} {'|f|_Minv':>10s} {'oracle err':>10s} {'zero-g rise':>11s}")
for c in (5e4, 5e5, 5e6):
    params = kn.MaterialParams(c_stretch=c)
    naive = simulate(state, RestShape.from_state(state), params, SimConfig(step_count=120))
    rest, report = optimize(state, params, gravity)
    held = simulate(state, rest, params, SimConfig(step_count=120))
    oracle = hanging_chain_rest_lengths(state, params, gravity)
    err = np.max(np.abs(rest.lengths / oracle - 1))
    released = simulate(state, rest, params, SimConfig(step_count=600, gravity=(0, 0, 0)), load=ExternalLoad((0, 0, 0)))
    rise = released.positions[-60:, -1, 1].mean() - state.geometry.positions[-1, 1]
    print(
        f"{c:10.0e} {naive.metrics.tip_drift.max():10.3e} {held.metrics.tip_drift.max():10.3e} "
        f"{report.residual_minv:10.3e} {err:10.3e} {rise:11.4e}"
    )
