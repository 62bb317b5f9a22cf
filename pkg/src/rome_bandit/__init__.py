"""Mixed-effects contextual bandit with graph cohesion and randomized selection.

The package has four layers: working models and doubly-robust
pseudo-rewards (`rewards`), the incremental penalized-WLS state and its
projected block covariances (`linalg`, `layout`, `graphs`), the
randomized selection policy and its baselines (`policy`, `baselines`),
and the experiment/evaluation tooling (`envs`, `runner`, `ope`, `cli`).
"""

from .baselines import (
    ActionCenteredTS,
    NetworkRegularizedTS,
    PerUserLinearTS,
    PooledBayesTS,
    feature_map_policy,
)
from .envs import (
    ENV_KINDS,
    EnvConfig,
    SimEnvironment,
    decision_regret,
    rectangular_schedule,
    staged_schedule,
)
from .graphs import CohesionGraph, build_penalty_matrix, chain_graph, cohesion_penalty, knn_graph
from .layout import BlockLayout
from .linalg import GramState, Selector, SparseVec, block_quantities
from .ope import (
    LoggedRecord,
    bootstrap_eval,
    ips,
    load_log,
    paired_onesided_pvalue,
    replay,
    save_log,
    snips,
)
from .policy import Decision, PolicyConfig, RomePolicy, confidence_radius, control_probability
from .rewards import (
    BaggedRegressor,
    CrossFittedModel,
    ZeroModel,
    assign_folds,
    bagged_ridge_model,
    bagged_tree_model,
    pseudo_reward,
)
from .runner import (
    POLICY_TAGS,
    ExperimentConfig,
    build_policy,
    load_trace,
    run_experiment,
    run_replication,
    trace_to_log,
)

__all__ = [
    "ActionCenteredTS",
    "BaggedRegressor",
    "BlockLayout",
    "CohesionGraph",
    "CrossFittedModel",
    "Decision",
    "ENV_KINDS",
    "EnvConfig",
    "ExperimentConfig",
    "GramState",
    "LoggedRecord",
    "NetworkRegularizedTS",
    "POLICY_TAGS",
    "PerUserLinearTS",
    "PolicyConfig",
    "PooledBayesTS",
    "RomePolicy",
    "Selector",
    "SimEnvironment",
    "SparseVec",
    "ZeroModel",
    "assign_folds",
    "bagged_ridge_model",
    "bagged_tree_model",
    "block_quantities",
    "bootstrap_eval",
    "build_penalty_matrix",
    "build_policy",
    "chain_graph",
    "cohesion_penalty",
    "confidence_radius",
    "control_probability",
    "decision_regret",
    "feature_map_policy",
    "ips",
    "knn_graph",
    "load_log",
    "load_trace",
    "paired_onesided_pvalue",
    "pseudo_reward",
    "rectangular_schedule",
    "replay",
    "run_experiment",
    "run_replication",
    "save_log",
    "snips",
    "staged_schedule",
    "trace_to_log",
]
