"""Rate regions and entropy-inequality certificates for distributed
multilevel diversity coding."""

from .core import (ENTROPY_TOL, POLYMATROID_TOL, DomainError, EntropyProfile,
                   LayeredSource, LayerPmf, SymmetricProfile, VerificationError,
                   build_profile, entropy_of_subset, is_symmetric_entropywise,
                   mask_from_members, members, ranked_subset, validate_polymatroid)
from .lp import (LPInstance, LPSolution, MultiplierFamily, closed_form_alpha1,
                 closed_form_alphaK, parse_weights, solve_simplex,
                 verify_multiplier, weight_class)
from .prover import (Certificate, EntropyFunctional, elemental_inequalities,
                     functional_from_multipliers, numeric_spotcheck, prove_nonneg,
                     verify_star_chain)
from .region import (build_layer_region, enumerate_vertices, region_membership,
                     support_value)
from .symmetric import (SymMultiplierFamily, build_chain, closed_form_sym,
                        feasibility_check_rl, recurse_multiplier, verify_family,
                        verify_sym_chain_inequality)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
