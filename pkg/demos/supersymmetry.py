"""
Exact Grassmann integration and localisation
============================================

Supernumbers with m pairs of odd generators are multiplied exactly, so
superintegrals over R^{2|2} reduce to ordinary integrals of the top
coefficient. Functions annihilated by the supersymmetry generator Q
integrate to their value at the origin.
"""

import numpy as np

from vrjplab.graph import WeightedGraph
from vrjplab.grassmann import (
    NotSupersymmetric, SuperForm, Supernumber, apply_Q, exp, h22_expectation_exact, localisation_check,
    superintegrate, z_form,
)

# %%
# Odd generators anticommute and square to zero.
xi, eta = Supernumber.xi(1, 0), Supernumber.eta(1, 0)
print("xi eta + eta xi =", (xi * eta + eta * xi).pretty())
print("(xi eta)^2      =", ((xi * eta) * (xi * eta)).pretty())

# %%
# z = sqrt(1 + x^2 + y^2 + 2 xi eta) has a nilpotent part. Evaluating the
# form at a point gives a supernumber with body sqrt(1 + x^2 + y^2).
print("z at (0.3, -0.4):", z_form(1, 0, (np.array([0.3]), np.array([-0.4]))).pretty())

# %%
# The Gaussian exp(-tau) is Q-closed, so its superintegral is its value at 0.
gauss = SuperForm(1, lambda s: exp(-s.tau(0, 0)), "exp(-tau)")
print("Q exp(-tau) at a point:", apply_Q(gauss, (np.array([0.7]), np.array([0.2]))).pretty())
print("superintegral:", superintegrate(gauss).value)
print(localisation_check(gauss))

# %%
# Multiplying by x breaks supersymmetry and the check refuses the form.
try:
    localisation_check(SuperForm(1, lambda s: exp(-s.tau(0, 0)) * s.x[0]))
except NotSupersymmetric as err:
    print("rejected:", err)

# %%
# The H^{2|2} model on two vertices is normalised: <1> = 1.
print("<1> on two vertices:", h22_expectation_exact(WeightedGraph.path(2, 1.0, 1.0)).value)
