"""
Scrambling products and reduced graphs
======================================

Long enough products of phase matrices have a strictly positive column,
which forces the honest states together.
"""

from relayabc import matrices as mx
from relayabc.config import preset
from relayabc.graph import count_reduced_graphs, enumerate_reduced_graphs, source_histogram
from relayabc.simulation import run_simulation

##############################################################################
# Reduced graphs
# --------------
#
# Dropping ``b`` incoming edges per node of the complete honest graph gives
# ``r`` reduced graphs. Each one has a node that reaches every other.

for h, b in [(3, 1), (4, 1), (5, 2)]:
    graphs = enumerate_reduced_graphs(h, b)
    print(h, b, "r =", count_reduced_graphs(h, b), "sources:", source_histogram(graphs))

##############################################################################
# Windows of 2rD+1 matrices
# -------------------------

trace = run_simulation(preset("complete_h3_b1_scrambling"))
mats = [mx.construct_phase_matrix(trace, p) for p in mx.complete_phases(trace)]
window = mx.scrambling_window(trace.h, trace.b, trace.D)
cols = mx.scrambling_windows(mats, window)
print("window:", window, "windows:", len(cols), "missing column:", sum(c is None for c in cols))

##############################################################################
# The worked example matrices behave as expected.

worked = mx.worked_examples()
print(mx.matrix_splice(worked["splice"], 0, 1, 0, 1))
print("positive column:", mx.product_nonzero_column([worked["full_column"]]))
