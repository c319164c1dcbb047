"""Inference attacks against fixed counting-aggregate releases.

A library and CLI for evaluating what a one-shot release of counting
queries leaks about individuals: a hybrid deterministic/stochastic
attribute-inference attack with solver-verified certainties, reconstruction
and likelihood baselines, membership-inference variants, a Laplace release
mechanism, privacy-game harnesses, and ROC/AUC/TPR@kFPR evaluation.
"""

__version__ = "0.1.0"

from .attack import (
    AttackResult,
    DesiaAttackConfig,
    DesiaOptions,
    desia_attack,
    desia_attack_mia,
    deterministic_aia,
    deterministic_mia,
    stochastic_predict,
)
from .baselines import (
    RapConfig,
    ReconstructionSet,
    SoftDataset,
    aia_vote,
    cip_reconstruct,
    l_neighborhood,
    likelihood_attack,
    mia_vote,
    rap_reconstruct,
    rap_relaxed_eval,
)
from .data import (
    AttributeSchema,
    Dataset,
    PartialRecord,
    Record,
    TargetUser,
    dataset_from_records,
    find_unique_targets,
    generate_synthetic,
    load_dataset_csv,
    load_schema_json,
    project,
    randomize_sensitive,
    save_schema_json,
    split_private_aux,
    write_dataset_csv,
)
from .errors import (
    CapacityError,
    DegenerateFitError,
    DesiaError,
    ParameterError,
    ParseError,
    SchemaError,
)
from .harness import (
    GameConfig,
    GameRun,
    attack_release_aia,
    load_game_run,
    mean_auc,
    run_aia_game,
    run_mia_game,
    save_game_run,
    sweep_noise,
    sweep_query_ratio,
)
from .logistic import MetaClassifier, fit_logistic_l2, train_meta_classifier
from .metrics import RocCurve, auc, roc, summarize, tpr_at_fpr
from .queries import (
    AggregateQuery,
    QueryMembershipIndex,
    QueryRelease,
    add_laplace_noise,
    build_membership_index,
    covers,
    evaluate,
    evaluate_all,
    load_query_spec,
    load_release_json,
    make_marginal_queries,
    release,
    sample_queries,
    save_query_spec,
    save_release_json,
    total_count_query,
)
from .shadow import ShadowBatch, sample_shadow_datasets_aia, sample_shadow_datasets_mia
from .solver import (
    Assignment,
    FeasibilityProblem,
    SolveLimits,
    SolveResult,
    SolveStatus,
    SumConstraint,
    add_sum_constraint,
    assignment_to_dataset,
    build_problem,
    enumerate_solutions,
    fix_variable,
    solve,
    tighten_domains,
)
