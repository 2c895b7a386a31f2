"""Market-equilibrium allocation of multi-resource fog capacity.

Library surface: domain types and utility arithmetic (`market`), the
consensus engine and transports (`admm`), the centralized solvers, verifier
and Pareto check (`equilibrium`), comparison schemes (`baselines`), fairness
auditors (`fairness`), the zero-sum masking protocol (`privacy`), the seeded
instance generator (`scenario`), and the benchmark harness (`bench`). The
``fogmarket`` CLI ties them together.
"""

__version__ = "0.1.0"

from .admm import (AdmmState, AveragingTransport, PlainTransport, admm_step,
                   initial_state, run_admm)
from .baselines import Scheme, SchemeRun, run_scheme, solve_mm, solve_prop, solve_swm
from .equilibrium import (CheckResult, EquilibriumReport, ParetoResult,
                          pareto_check, solve_eg, solve_geg, verify_equilibrium)
from .fairness import (FairnessReport, audit, envy_free_index,
                       proportionality_check, sharing_incentive_check,
                       utilization)
from .lp import (DenseLP, LPError, LPInfeasibleError, LPSolution,
                 LPUnboundedError, solve_lp)
from .market import (EPS_FEAS, DegenerateInstanceError, InstanceError,
                     MarketInstance, ServiceSpec, bundle_price, bundle_prices,
                     dump_instance, dumps_instance, is_feasible, load_instance,
                     loads_instance, max_bang_per_buck, per_node_utility,
                     spend, spends, utilities, utility)
from .numerics import clamp_projection, tree_mean, tree_sum
from .privacy import (PLATFORM, MaskedTransport, MaskingRound, ThreatModel,
                      adversary_replay, breach_probability,
                      estimate_inbound_distribution, messages_per_round,
                      replay_mask_reuse, run_masking_round, write_transcript)
from .scenario import (GeneratedInstance, GeneratorConfig, NodeProfile,
                       generate, load_catalog)
from .solution import (EquilibriumSolution, SolveMeta, load_solution,
                       polish_solution, save_solution, solution_from_point)
from .subproblem import (QuadLogSubproblem, SubproblemError, XUpdateResult,
                         solve_x_update)

__all__ = [name for name in dir() if not name.startswith("_")]
