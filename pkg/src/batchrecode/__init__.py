"""Expected-rank tables and adaptive recoding for batched network coding."""
from .errors import (ConfigError, DegenerateChannel, HorizonExceeded, InvalidDistribution,
                     InvalidField, InvalidModel, NonErgodicModel, OracleBudgetExceeded,
                     RecodingError, TableBudgetExceeded, UnsupportedSimulationField)
from .expected_rank import (ExpectedRankTable, build_table, default_horizon, monte_carlo_er,
                            propagate_rank_dist, verify_concavity)
from .loss import Bernoulli, DeterministicPrefix, GilbertElliott, MarkovModulated
from .optimizer import (OptimizationOutcome, brute_force_reference, certify, objective,
                        policy_to_conditional_dist, retune, solve_dual, solve_greedy, tune)
from .rank import INF, zeta, zeta_transfer

__version__ = "0.1.0"
