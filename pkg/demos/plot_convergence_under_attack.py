"""
Convergence under attack
========================

Four honest nodes on a complete graph agree on a value inside their initial
range while a fifth node misbehaves in different ways.
"""

import numpy as np

from relayabc.adversary import StrategySpec
from relayabc.config import preset
from relayabc.harness import validity_violations
from relayabc.simulation import run_simulation

##############################################################################
# The preset
# ----------
#
# ``complete_h4_b1`` starts the honest nodes at 0, 1, 2 and 3. Node 4 is
# byzantine and by default keeps announcing 100.

config = preset("complete_h4_b1")
trace = run_simulation(config)
print(trace.states[:4])

##############################################################################
# The outlier is trimmed away at the first update, so every honest node lands
# on the mean of the three middle values.

spreads = np.ptp(trace.states, axis=1)
print("spread after t=0:", spreads[0], " after t=1:", spreads[1])

##############################################################################
# Swapping the adversary
# ----------------------
#
# Every shipped strategy is tried on the same graph. The final value moves
# with the attack but always stays inside [0, 3].

for kind, params in [
    ("silent", {}),
    ("random_equivocate", {"low": -50.0, "high": 150.0}),
    ("replay_stale", {"age": 3, "value": -100.0}),
    ("forge_attempt", {"value": 1000.0}),
    ("future_marker", {"value": 100.0}),
]:
    config.strategies = {4: StrategySpec(kind, params)}
    trace = run_simulation(config)
    print(f"{kind:18s} final={trace.states[-1, 0]:.6f} "
          f"spread={np.ptp(trace.states[-1]):.1e} violations={validity_violations(trace)}")
