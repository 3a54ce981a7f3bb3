"""Exact Grassmann algebra, forms, the supersymmetry generator and superintegration."""

from .algebra import (
    MAX_PAIRS, Analytic, Dual, GrassmannError, Supernumber, apply_analytic, coefficient_IJ,
    cosh, exp, log, mul, pair_monomial, random_supernumber, reciprocal, sinh, sqrt,
)
from .forms import (
    SuperForm, SuperSpins, ambient_spins, apply_Q, eta_form, super_inner, tau_form, x_form,
    xi_form, y_form, z_form,
)
from .horo import (
    ambient_vs_horo, berezinian_matrix, horo_spins, horo_susy_map, superdeterminant,
    superintegrate_horo, verify_berezinian, verify_susy_horo_identities,
)
from .integrate import (
    NonDecayError, QuadSpec, SuperIntegral, h22_action, h22_expectation_exact, h22_integrand,
    superintegrate,
)
from .localisation import LocalisationResult, NotSupersymmetric, battery, localisation_check, run_battery

__all__ = [name for name in dir() if not name.startswith("_")]
