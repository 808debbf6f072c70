"""Discrete-event simulator for proof-of-work Sybil defenses.

The package centers on a defense that prices entrance puzzles by the
count of recent joins relative to an estimated good-ID join rate, plus
four comparison defenses and three cost-reduction heuristics, an exact
budget-constrained adversary, and analysis tooling that validates the
estimation and spend-rate bounds numerically on every run.
"""

from .adversary import AdversaryConfig, AdversaryLedger, burst_batch_size
from .analysis import (
    AssumptionConstants,
    EpochAnalysis,
    check_interval_epochs,
    check_lemma_algcost,
    check_lemma_joinbad,
    check_theorem1,
    check_theorem2,
    detect_epochs,
    measure_a1,
    measure_a2,
)
from .baselines import RempParams, remp_spend_rate
from .bootstrap import BootstrapConfig, bootstrap
from .churn import (
    ChurnEvent,
    ChurnTrace,
    ConfigError,
    GeneratorSpec,
    TraceError,
    gen_exp_poisson,
    gen_weibull,
    load_trace,
    serialize,
    validate,
)
from .engine import Event, SimConfig, SimResult, Simulation, run
from .heuristics import HeuristicConfig, h1_purge_due, h2_bad_upper_bound, h3_admit
from .togcom import (
    Committee,
    CostLedger,
    EstimatorState,
    SystemState,
    entrance_difficulty,
    estimator_update,
    execute_purge,
    on_join,
    purge_due,
    select_committee,
)

__version__ = "0.1.0"

__all__ = [
    "AdversaryConfig",
    "AdversaryLedger",
    "AssumptionConstants",
    "BootstrapConfig",
    "ChurnEvent",
    "ChurnTrace",
    "Committee",
    "ConfigError",
    "CostLedger",
    "EpochAnalysis",
    "EstimatorState",
    "Event",
    "GeneratorSpec",
    "HeuristicConfig",
    "RempParams",
    "SimConfig",
    "SimResult",
    "Simulation",
    "SystemState",
    "TraceError",
    "bootstrap",
    "burst_batch_size",
    "check_interval_epochs",
    "check_lemma_algcost",
    "check_lemma_joinbad",
    "check_theorem1",
    "check_theorem2",
    "detect_epochs",
    "entrance_difficulty",
    "estimator_update",
    "execute_purge",
    "gen_exp_poisson",
    "gen_weibull",
    "h1_purge_due",
    "h2_bad_upper_bound",
    "h3_admit",
    "load_trace",
    "measure_a1",
    "measure_a2",
    "on_join",
    "purge_due",
    "remp_spend_rate",
    "run",
    "select_committee",
    "serialize",
    "validate",
]
