"""Batch off-policy RL with nested (background/foreground) Q-functions."""

__version__ = "0.1.0"

from .data import (
    BACKGROUND,
    FOREGROUND,
    Action,
    NestedDataset,
    State,
    Trajectory,
    Transition,
    flatten,
    load_jsonl,
    save_jsonl,
    split_train_test,
    structureless_relabel,
)
from .cartpole import CartpoleParams, EnvOutcome, collect_random_trajectory, generate_dataset, random_start, rollout_policy, step
from .models import (
    LinearQModel,
    NestedArch,
    NestedQModel,
    ParamMask,
    fit_norm_stats,
    forward,
    forward_augmented,
    forward_linear,
    gradient,
    init_linear,
    init_params,
    load_model,
    save_model,
    sgd_update,
)
from .training import (
    TrainConfig,
    TrainReport,
    bellman_targets,
    greedy_policy,
    regression_step,
    train_fqi,
    train_nfqi,
    train_transfer,
)
from .evaluation import EvalReport, MatchReport, action_matching, evaluate_policy
from .shapley import AttributionConfig, AttributionReport, attribute_dataset, shapley_exact, shapley_sampled
from .clinical import RepletionAction, RewardParams, phi, reward, synth_cohort
