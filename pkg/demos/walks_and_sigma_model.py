"""
Reinforced walks and the hyperbolic sigma model on two vertices
================================================================

On a graph with a killing field h, the discounted time a vertex-reinforced
jump process started at a spends at b equals the two-point function
<y_a y_b> of the H^{2|2} sigma model. Here both sides are computed on the
smallest interesting graph: two vertices joined by one edge.
"""

import numpy as np

from vrjplab.chain import MCMCParams
from vrjplab.graph import WeightedGraph
from vrjplab.rng import lane
from vrjplab.sigma_h22 import estimate_two_point, exact_expectation_h22, sample_h22, y_product
from vrjplab.vrjp import discounted_profile, simulate

g = WeightedGraph.path(2, 1.0, 1.0)

# %%
# A single trajectory: the walk holds at a vertex for an exponential time
# whose rate grows with the local time already spent at the neighbour.
traj = simulate(g, 0, np.ones(2), 5.0, lane(1, "vrjp", 0, 0))
print("jumps in [0, 5]:", traj.n_jumps)
print("local times at t=5:", traj.final_local_times)

# %%
# Walk side: discounted occupation of each vertex, estimated from 200k walks.
prof = discounted_profile(g, 0, n_samples=200_000, rng=lane(1, "vrjp", 1, 0), strategy="killed-occupation")
for b in range(2):
    print(f"walk   int E[1(X_t={b})] e^(-ht) dt = {prof.mean[b]:.4f} +- {prof.stderr[b]:.4f}")

# %%
# Sigma-model side, twice: a deterministic quadrature in horospherical
# coordinates and a Markov chain on the t-marginal with Rao-Blackwellised
# Gaussian s-sector.
chain = sample_h22(g, MCMCParams(n_burn=2000, n_keep=20_000, thin=2), lane(1, "sigma_h22", 0, 0))
for b in range(2):
    q = exact_expectation_h22(g, y_product(0, b)).value
    m, se = estimate_two_point(chain, 0, b)
    print(f"sigma  <y_0 y_{b}> quadrature {q:.4f}, chain {m:.4f} +- {se:.4f}")

# %%
# The two columns agree, and they sum to 1/h = 1: the walk is killed at
# rate h wherever it is.
print("total occupation:", prof.total, "+-", prof.total_stderr)
