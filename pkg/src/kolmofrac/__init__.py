"""Fractional powers of hypoelliptic Kolmogorov operators and chain-rule checks."""
from .balakrishnan import (RangeViolationError, TaylorRemainder, TruncationError,
                           besov_seminorm, carre_evolutive, frac_K, frac_K_mc, frac_K_phi,
                           kernel_scaling_integral, remainder, remainder_mc, remainder_terms)
from .fractional import aronszajn_energy, carre_direct, frac_laplacian_direct
from .hormander import (FactorizationError, HormanderPair, HypoellipticityError,
                        InvalidInputError, check_hormander, covariance_K, heat_pair,
                        kolmogorov_pair, mat_exp)
from .phi import PhiFunction, exponential, identity, power, quadratic, softabs
from .quadrature import QuadratureSpec
from .semigroup import apply_PK, apply_Pt, dual_mass, generator, kernel, mc_apply_PK
from .special import gamma_fn, gamma_ns
from .testfn import (TestFunction, constant, gaussian, gaussian_expectation, poly_gaussian,
                     polynomial, time_slice)
from .verify import (CheckReport, ReportRow, check_convexity_inequality,
                     check_engine_agreement, check_general_chain_rule, check_kernel_mass,
                     check_s_limits, check_square_rule, check_tind_reduction)

__version__ = "0.1.0"

__all__ = [n for n in dir() if not n.startswith("_")]
