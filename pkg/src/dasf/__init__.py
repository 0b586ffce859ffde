"""Distributed adaptive signal fusion: simulation library and study runner.

Subpackages by responsibility: ``network`` (topologies, tree pruning),
``signals`` (synthetic streams, batch statistics), ``sfo`` (problem families
and their solvers), ``engine`` (the distributed iteration itself),
``experiments`` (Monte-Carlo studies), ``cli`` (command-line runner).
"""

from .engine import (
    ConvergenceRecord,
    RunResult,
    TransportLog,
    TransportRecord,
    audit_transport,
    dasf_run,
    dasf_step,
    normalized_error,
    select_updating_node,
)
from .network import (
    GraphConnectivityError,
    NetworkGraph,
    PrunedTree,
    make_erdos_renyi,
    make_fully_connected,
    make_path,
    make_random_tree,
    prune_to_tree,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    StudyResult,
    load_config,
    run_study,
    run_tracking,
    validate_config,
)
from .sfo import (
    CompressedInstance,
    InfeasibleProblemError,
    MmseProblem,
    QcqpProblem,
    ScqpProblem,
    SfoProblem,
    SolveOutcome,
    SolverError,
    TroProblem,
    solve_centralized,
    solve_instance,
)
from .signals import (
    DriftSpec,
    LambdaSchedule,
    SampleBatch,
    SignalModel,
    sample_adaptive,
    sample_stationary,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceRecord",
    "RunResult",
    "TransportLog",
    "TransportRecord",
    "audit_transport",
    "dasf_run",
    "dasf_step",
    "normalized_error",
    "select_updating_node",
    "GraphConnectivityError",
    "NetworkGraph",
    "PrunedTree",
    "make_erdos_renyi",
    "make_fully_connected",
    "make_path",
    "make_random_tree",
    "prune_to_tree",
    "ConfigError",
    "ExperimentConfig",
    "StudyResult",
    "load_config",
    "run_study",
    "run_tracking",
    "validate_config",
    "CompressedInstance",
    "InfeasibleProblemError",
    "MmseProblem",
    "QcqpProblem",
    "ScqpProblem",
    "SfoProblem",
    "SolveOutcome",
    "SolverError",
    "TroProblem",
    "solve_centralized",
    "solve_instance",
    "DriftSpec",
    "LambdaSchedule",
    "SampleBatch",
    "SignalModel",
    "sample_adaptive",
    "sample_stationary",
    "__version__",
]
