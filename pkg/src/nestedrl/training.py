"""Batch training loops: plain fitted Q-iteration, the two-stage nested
procedure, and the transfer-learning baseline.

Every loop alternates Bellman-target computation with mini-batch SGD
regression. Convergence control follows one of two rules: when a simulator
probe is attached, a stage converges after `convergence_successes` consecutive
probe rollouts reach the step cap; otherwise it stops when the regression loss
plateaus. Each loop is a deterministic function of (data, config); the
shuffling stream is derived from config.seed via `seeding.child_rng(seed,
TAG_TRAIN, stage_index)` and parameter initialization uses
`seeding.derive_seed(seed, TAG_TRAIN, 0)`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .data import (
    BACKGROUND,
    FOREGROUND,
    Action,
    NestedDataset,
    State,
    Transition,
    flatten,
)
from .models import (
    FOREGROUND_ONLY,
    FULL_UPDATE,
    SHARED_ONLY,
    LinearQModel,
    NestedArch,
    NestedQModel,
    ParamMask,
    QModel,
    fit_norm_stats,
    init_params,
)
from .seeding import TAG_TRAIN, child_rng, derive_seed

PolicyFn = Callable[[State, int], Action]
ProbeFn = Callable[[PolicyFn], bool]

REASON_SUCCESS = "success-criterion"
REASON_PLATEAU = "loss-plateau"
REASON_CAP = "iteration-cap"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by all training loops."""

    gamma: float = 0.95
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs_per_iteration: int = 1
    max_fqi_iterations: int = 300
    convergence_successes: int = 3
    eval_every: int = 1
    seed: int = 0
    normalize_inputs: bool = True
    stage1_all_samples: bool = True
    plateau_window: int = 10
    plateau_rel_tol: float = 1e-4

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if min(self.batch_size, self.epochs_per_iteration, self.convergence_successes,
               self.eval_every, self.plateau_window) < 1:
            raise ValueError("batch_size, epochs_per_iteration, convergence_successes, "
                             "eval_every, and plateau_window must be at least 1")
        if self.max_fqi_iterations < 0:
            raise ValueError("max_fqi_iterations must be non-negative")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs_per_iteration": self.epochs_per_iteration,
            "max_fqi_iterations": self.max_fqi_iterations,
            "convergence_successes": self.convergence_successes,
            "eval_every": self.eval_every,
            "seed": self.seed,
            "normalize_inputs": self.normalize_inputs,
            "stage1_all_samples": self.stage1_all_samples,
            "plateau_window": self.plateau_window,
            "plateau_rel_tol": self.plateau_rel_tol,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass(frozen=True)
class StageReport:
    """Outcome of one FQI stage."""

    stage: str
    iterations: int
    final_loss: float | None
    reason: str
    losses: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.losses) != self.iterations:
            raise ValueError("loss trace length must equal iterations run")


@dataclass(frozen=True)
class TrainReport:
    stages: tuple[StageReport, ...]

    def to_dict(self) -> dict:
        return {
            "stages": [
                {
                    "stage": s.stage,
                    "iterations": s.iterations,
                    "final_loss": s.final_loss,
                    "reason": s.reason,
                    "losses": list(s.losses),
                }
                for s in self.stages
            ]
        }

    def loss_trace_rows(self) -> list[tuple[int, str, float]]:
        """(iteration, stage, loss) rows for CSV export; iterations count per stage."""
        rows = []
        for s in self.stages:
            rows.extend((i + 1, s.stage, loss) for i, loss in enumerate(s.losses))
        return rows


class TransitionBatch:
    """Array view of a transition list, prepared once per training run."""

    def __init__(self, transitions: list[Transition]):
        if not transitions:
            raise ValueError("transition list is empty")
        self.n_actions = transitions[0].action.n_actions
        states = np.stack([tr.state.as_array() for tr in transitions])
        one_hot = np.eye(self.n_actions)[[tr.action.id for tr in transitions]]
        self.x = np.concatenate([states, one_hot], axis=1)
        next_states = np.stack([tr.next_state.as_array() for tr in transitions])
        # constant per-action next-state inputs, reused every Bellman update
        n = len(transitions)
        self.x_next = np.empty((self.n_actions, n, self.x.shape[1]))
        for a in range(self.n_actions):
            self.x_next[a, :, : states.shape[1]] = next_states
            self.x_next[a, :, states.shape[1] :] = 0.0
            self.x_next[a, :, states.shape[1] + a] = 1.0
        self.rewards = np.array([tr.reward for tr in transitions], dtype=np.float64)
        self.terminals = np.array([tr.terminal for tr in transitions], dtype=bool)
        self.groups = np.array([float(tr.group) for tr in transitions], dtype=np.float64)

    def __len__(self) -> int:
        return self.rewards.size

    def z_values(self, z_override: int | None) -> np.ndarray:
        if z_override is None:
            return self.groups
        return np.full(len(self), float(z_override))


def _bellman_targets(model: QModel, batch: TransitionBatch, gamma: float,
                     z_override: int | None) -> np.ndarray:
    z = batch.z_values(z_override)
    q = np.stack([model.value_batch(batch.x_next[a], z) for a in range(batch.n_actions)])
    best = q.max(axis=0)
    return np.where(batch.terminals, batch.rewards, batch.rewards + gamma * best)


def bellman_targets(
    model: QModel,
    transitions: list[Transition],
    gamma: float,
    z_override: int | None = None,
) -> np.ndarray:
    """One regression target per transition, in input order.

    Non-terminal: r + gamma * max_a' Q(s', a', z); terminal: r alone. The
    group label used in the max-evaluation is the transition's own unless
    z_override replaces it for every sample.
    """
    return _bellman_targets(model, TransitionBatch(transitions), gamma, z_override)


def _regression(
    model: QModel,
    batch: TransitionBatch,
    targets: np.ndarray,
    config: TrainConfig,
    mask: ParamMask,
    z_override: int | None,
    rng: np.random.Generator,
) -> tuple[QModel, float]:
    z = batch.z_values(z_override)
    n = len(batch)
    for _ in range(config.epochs_per_iteration):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            grads = model.grad_batch(
                batch.x[idx], z[idx], targets[idx], scale=1.0 / idx.size, mask=mask
            )
            model = model.updated(grads, config.learning_rate, mask)
    residual = model.value_batch(batch.x, z) - targets
    return model, float(np.mean(residual**2))


def regression_step(
    model: QModel,
    transitions: list[Transition],
    targets: np.ndarray,
    config: TrainConfig,
    mask: ParamMask = FULL_UPDATE,
    z_override: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[QModel, float]:
    """epochs_per_iteration passes of seed-shuffled mini-batch SGD on the
    squared error; returns the updated model and the post-update mean loss."""
    if len(targets) != len(transitions):
        raise ValueError("one target per transition required")
    if rng is None:
        rng = child_rng(config.seed, TAG_TRAIN, 1)
    return _regression(
        model, TransitionBatch(transitions), np.asarray(targets, dtype=np.float64),
        config, mask, z_override, rng,
    )


def _plateaued(losses: list[float], window: int, rel_tol: float) -> bool:
    if len(losses) <= window:
        return False
    prev, now = losses[-window - 1], losses[-1]
    return (prev - now) <= rel_tol * max(abs(prev), 1e-12)


def _run_stage(
    model: QModel,
    batch: TransitionBatch,
    config: TrainConfig,
    mask: ParamMask,
    z_value: int,
    probe: ProbeFn | None,
    policy_z: int,
    stage_name: str,
    rng: np.random.Generator,
) -> tuple[QModel, StageReport]:
    losses: list[float] = []
    streak = 0
    reason = REASON_CAP
    for k in range(1, config.max_fqi_iterations + 1):
        targets = _bellman_targets(model, batch, config.gamma, z_value)
        model, loss = _regression(model, batch, targets, config, mask, z_value, rng)
        losses.append(loss)
        if probe is not None:
            if k % config.eval_every == 0:
                streak = streak + 1 if probe(greedy_policy(model, policy_z)) else 0
                if streak >= config.convergence_successes:
                    reason = REASON_SUCCESS
                    break
        elif _plateaued(losses, config.plateau_window, config.plateau_rel_tol):
            reason = REASON_PLATEAU
            break
    final = losses[-1] if losses else None
    return model, StageReport(stage_name, len(losses), final, reason, tuple(losses))


def _prepare_model(
    model: QModel | None,
    transitions: list[Transition],
    config: TrainConfig,
) -> QModel:
    if model is None:
        p = transitions[0].state.dim
        n_actions = transitions[0].action.n_actions
        arch = NestedArch(input_dim=p + n_actions, n_actions=n_actions)
        model = init_params(arch, derive_seed(config.seed, TAG_TRAIN, 0))
    if config.normalize_inputs and isinstance(model, NestedQModel):
        model = fit_norm_stats(model, transitions)
    return model


def train_fqi(
    transitions: list[Transition],
    env_probe: ProbeFn | None,
    config: TrainConfig,
    model: QModel | None = None,
) -> tuple[QModel, TrainReport]:
    """Group-agnostic FQI: targets and regression both treat every sample as
    foreground (z=1, all layers active), all parameters updated."""
    if not transitions:
        raise ValueError("cannot train on an empty transition list")
    model = _prepare_model(model, transitions, config)
    batch = TransitionBatch(transitions)
    rng = child_rng(config.seed, TAG_TRAIN, 1)
    model, stage = _run_stage(
        model, batch, config, FULL_UPDATE, z_value=1, probe=env_probe,
        policy_z=1, stage_name="fqi", rng=rng,
    )
    return replace(model, stage_tag="fqi"), TrainReport((stage,))


def train_nfqi(
    dataset: NestedDataset,
    env_probes: tuple[ProbeFn | None, ProbeFn | None] | None,
    config: TrainConfig,
    stage2_config: TrainConfig | None = None,
    model: NestedQModel | None = None,
) -> tuple[NestedQModel, PolicyFn, PolicyFn, TrainReport]:
    """Two-stage nested training.

    Stage 1 runs FQI over the pooled transitions with every group label forced
    to 0, updating only the shared parameters. Stage 2 runs FQI over the
    foreground transitions with z=1, updating only the foreground branch.
    Returns the model plus the background policy (argmax over z=0 values) and
    foreground policy (argmax over z=1 values).
    """
    if not dataset.background or not dataset.foreground:
        raise ValueError("both background and foreground partitions must be nonempty")
    all_transitions = flatten(dataset)
    fg_transitions = [tr for traj in dataset.foreground for tr in traj.transitions]
    bg_transitions = [tr for traj in dataset.background for tr in traj.transitions]
    stage1_data = all_transitions if config.stage1_all_samples else bg_transitions

    model = _prepare_model(model, all_transitions, config)
    probe_bg, probe_fg = env_probes if env_probes is not None else (None, None)
    stage2_config = stage2_config if stage2_config is not None else config

    model, stage1 = _run_stage(
        model, TransitionBatch(stage1_data), config, SHARED_ONLY, z_value=0,
        probe=probe_bg, policy_z=0, stage_name="nfqi-shared",
        rng=child_rng(config.seed, TAG_TRAIN, 1),
    )
    model, stage2 = _run_stage(
        model, TransitionBatch(fg_transitions), stage2_config, FOREGROUND_ONLY, z_value=1,
        probe=probe_fg, policy_z=1, stage_name="nfqi-foreground",
        rng=child_rng(config.seed, TAG_TRAIN, 2),
    )
    model = replace(model, stage_tag="nfqi")
    return model, greedy_policy(model, 0), greedy_policy(model, 1), TrainReport((stage1, stage2))


def train_transfer(
    dataset: NestedDataset,
    env_probes: tuple[ProbeFn | None, ProbeFn | None] | None,
    config: TrainConfig,
    stage2_config: TrainConfig | None = None,
    model: NestedQModel | None = None,
) -> tuple[NestedQModel, PolicyFn, TrainReport]:
    """Transfer baseline: fit the shared branch on background data only, freeze
    it, then fine-tune the foreground branch on foreground data. Inference
    ignores the group label and always uses all layers (z treated as 1)."""
    if not dataset.background or not dataset.foreground:
        raise ValueError("both background and foreground partitions must be nonempty")
    bg_transitions = [tr for traj in dataset.background for tr in traj.transitions]
    fg_transitions = [tr for traj in dataset.foreground for tr in traj.transitions]

    model = _prepare_model(model, flatten(dataset), config)
    probe_bg, probe_fg = env_probes if env_probes is not None else (None, None)
    stage2_config = stage2_config if stage2_config is not None else config

    model, stage1 = _run_stage(
        model, TransitionBatch(bg_transitions), config, SHARED_ONLY, z_value=0,
        probe=probe_bg, policy_z=0, stage_name="transfer-shared",
        rng=child_rng(config.seed, TAG_TRAIN, 1),
    )
    model, stage2 = _run_stage(
        model, TransitionBatch(fg_transitions), stage2_config, FOREGROUND_ONLY, z_value=1,
        probe=probe_fg, policy_z=1, stage_name="transfer-foreground",
        rng=child_rng(config.seed, TAG_TRAIN, 2),
    )
    model = replace(model, stage_tag="transfer")
    return model, greedy_policy(model, 1), TrainReport((stage1, stage2))


def greedy_policy(model: QModel, z: int | None) -> PolicyFn:
    """Action with the maximal Q-value; exact ties break to the lowest id.

    With a fixed z the returned policy ignores the group it is called with;
    z=None evaluates at the caller-supplied group instead.
    """
    n_actions = model.n_actions
    eye = np.eye(n_actions)

    def policy(state: State, group: int = 0) -> Action:
        use_z = float(group if z is None else z)
        x = np.concatenate([np.tile(state.as_array(), (n_actions, 1)), eye], axis=1)
        q = model.value_batch(x, np.full(n_actions, use_z))
        return Action(int(np.argmax(q)), n_actions)

    return policy
