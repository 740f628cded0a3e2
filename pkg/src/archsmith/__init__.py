"""Compose hybrid language-model layer stacks from a small set of primitives.

The pipeline is search (greedy tree search scored by a proxy evaluator),
aggregate (collapse discovered architectures into one base), extrapolate
(stack or stretch the base to a full depth) and plan (FLOP-matched step
counts per training budget).
"""

from __future__ import annotations

from .aggregate import (
    PoolRecord,
    RankedPool,
    aggregate_exponential_multidataset,
    aggregate_layerwise_mode,
    aggregate_n0,
    aggregate_n1,
    aggregate_n2,
    aggregate_pool,
    kmeans_cluster,
    rank_architectures,
)
from .analysis import (
    FrontierFit,
    ParabolaFit,
    ScoreContext,
    fit_frontier,
    fit_isoflop_parabola,
    frontier_delta,
    generalization_gap,
    march_of_9s,
    normalized_score,
    pareto_frontier,
    vsr,
)
from .arch import (
    A,
    M,
    Mb,
    Primitive,
    encode_onehot,
    format_architecture,
    make_pool,
    mutate,
    parse_architecture,
    search_space_size,
)
from .errors import ArchsmithError
from .extrapolate import LayerPattern, Run, choose_depth, format_pattern, parse_pattern, run_length_encode, stack, stretch
from .proxy import Direction, FitnessRecord, SyntheticEvaluator, synthetic_fitness
from .scale import (
    LayerCounts,
    ScaleConfig,
    SsmConfig,
    load_preset,
    mlp_hidden_dim,
    params_model,
    plan_budgets,
    ssm_hidden_dim,
    step_flops,
    steps_for_budget,
)
from .search import MutatingProposer, RunLog, run_greedy, select_parent, verify_log
from .workspace import TaskManifest, Workspace, load_task, read_submission, write_submission

__version__ = "0.1.0"
