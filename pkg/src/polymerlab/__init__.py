"""polymerlab: directed-polymer partition-mass toolkit on Z^d.

Exact small-instance oracles, renewal-theoretic second moments, the
L2-threshold solver, deterministic counter-seeded Monte Carlo replicas, and
estimators for tail exponents, overshoot moments, endpoint localization,
and fluctuation-field scaling.
"""

from . import environment
from . import walk
from . import field
from . import exact
from . import estimators
from . import spine

from .environment import EnvModel, gaussian, two_point, uniform, log_mgf, chi
from .walk import (WalkKernel, srw, finite_support, nu1, nu2, apply_D,
                   return_prob_series, collision_probability,
                   first_collision_law, tail_exponent_eta, RenewalTable)
from .field import (PolymerField, EnvStream, init_point, init_plane,
                    evolve_step, endpoint_measure, run_until_overshoot,
                    plane_field_functional, bump, TestFunction)
from .exact import (exact_partition, exact_law_of_Wn, replica_moment,
                    second_moment_renewal, solve_beta2, critical_growth_fit,
                    EnumerationBudget)
from .estimators import (ReplicaSummary, TailFit, simulate_suprema, hill_tail,
                         supermultiplicativity_check, overshoot_moments,
                         endpoint_localization, moment_growth,
                         fluctuation_scaling)
from .spine import SpineSample, sample_spine, size_biased_expectation

__version__ = "0.1.0"
