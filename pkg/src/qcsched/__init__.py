"""Optimal scheduling and rate/power allocation for multiuser orthogonal
fading channels under quantized channel-state information.

The transmitter only knows, per user and channel, which quantization region
the fading gain fell into. This package provides:

* the fading/quantization layer (``channel``, ``quantizer``),
* per-region power-rate couplings for four QoS families (``powerrate``),
* the winner-takes-all scheduler, its ε-smooth relaxation and the tie LP
  (``allocator``, ``simplex``),
* exact and stochastic dual evaluations (``dual``) and the offline/online
  multiplier solvers (``solver``),
* feedback-overhead accounting and scheme benchmarking (``analysis``),
* a JSON-config experiment runner (``qcsched`` console script, ``cli``).
"""

from .allocator import (DEFAULT_RATE_CAP, DEFAULT_TIE_RTOL, Multipliers,
                        RateCostTables, ScheduleColumn, TieInfeasibleError,
                        TieInstance, TieSolution, build_tables,
                        find_tie_instances, hard_schedule, smooth_schedule,
                        smooth_weights, solve_tie_lp, winner_sets)
from .analysis import (CompareSetup, OverheadReport, cluster_audit,
                       compare_schemes, feedback_bits, mc_primal,
                       realize_probabilistic_access, sweep_regions)
from .channel import (FadingModel, mean_gain_from_taps, sample_gain_blocks,
                      sample_gains, snr_db_to_mean_gain)
from .dual import (DualEvaluation, block_allocation, exact_dual,
                   jacobian_check, stochastic_subgradient)
from .powerrate import (ErgodicCapacity, MaxAvgBer, MaxInstBer, NumericError,
                        OutageCapacity, PowerRate, RegionContext,
                        delta_outage_gain, inv_marginal_power, make_model,
                        marginal_power, power_of_rate, rate_of_power,
                        region_contexts)
from .quantizer import (DEFAULT_ENUM_BUDGET, EnumerationBudgetError,
                        QuantizerGrid, build_equiprobable, build_random,
                        column_prob, column_space, enumerate_columns,
                        quantize, region_prob, region_prob_table)
from .simplex import LPInfeasibleError, LPUnboundedError, solve_lp
from .solver import (OnlineResult, Problem, SolverConfig, Trajectory,
                     multiplier_settled, run_offline_nonsmooth,
                     run_offline_smooth, run_online)
from .special import exp1, exp1_scaled

__version__ = "0.1.0"

__all__ = [
    "CompareSetup", "DEFAULT_ENUM_BUDGET", "DEFAULT_RATE_CAP",
    "DEFAULT_TIE_RTOL", "DualEvaluation", "EnumerationBudgetError",
    "ErgodicCapacity", "FadingModel", "LPInfeasibleError",
    "LPUnboundedError", "MaxAvgBer", "MaxInstBer", "Multipliers",
    "NumericError", "OnlineResult", "OutageCapacity", "OverheadReport",
    "PowerRate", "Problem", "QuantizerGrid", "RateCostTables",
    "RegionContext", "ScheduleColumn", "SolverConfig", "TieInfeasibleError",
    "TieInstance", "TieSolution", "Trajectory", "block_allocation",
    "build_equiprobable", "build_random", "build_tables", "cluster_audit",
    "column_prob", "column_space", "compare_schemes", "delta_outage_gain",
    "enumerate_columns", "exact_dual", "exp1", "exp1_scaled",
    "feedback_bits", "find_tie_instances", "hard_schedule",
    "inv_marginal_power", "jacobian_check", "make_model",
    "marginal_power", "mc_primal", "mean_gain_from_taps",
    "multiplier_settled", "power_of_rate", "quantize", "rate_of_power",
    "realize_probabilistic_access", "region_contexts", "region_prob",
    "region_prob_table", "run_offline_nonsmooth", "run_offline_smooth",
    "run_online", "sample_gain_blocks", "sample_gains", "smooth_schedule",
    "smooth_weights", "snr_db_to_mean_gain", "solve_lp", "solve_tie_lp",
    "stochastic_subgradient", "sweep_regions", "winner_sets",
]
