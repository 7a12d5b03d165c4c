"""Shapley-value feature attribution for Q-models.

Features are blocks of raw input dimensions: each state coordinate is its own
feature and the whole one-hot action block counts as a single feature. The
coalition value v(S) is the model output with the blocks outside S replaced by
reference values (a background mean by default; optionally an average over
several reference rows).

`shapley_exact` enumerates all coalitions with the standard combinatorial
weights and is limited to 12 features; `shapley_sampled` is a seeded Monte
Carlo permutation estimator that converges to the exact values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Transition
from .models import QModel, build_inputs
from .seeding import TAG_ATTRIBUTE, derive_seed

MAX_EXACT_FEATURES = 12

CARTPOLE_FEATURES = (
    "cart_position",
    "cart_velocity",
    "pole_angle",
    "pole_velocity",
    "action",
)


def _as_reference_matrix(reference_blocks: list[np.ndarray]) -> list[np.ndarray]:
    """Normalize per-feature references to 2-D (n_refs, block_dim) arrays."""
    refs = [np.atleast_2d(np.asarray(r, dtype=np.float64)) for r in reference_blocks]
    n_refs = {r.shape[0] for r in refs}
    if len(n_refs) != 1:
        raise ValueError("all features must carry the same number of reference rows")
    return refs


def _coalition_values(value_fn, sample_blocks, reference_blocks, masks: np.ndarray) -> np.ndarray:
    """v(S) for each coalition mask; averages over reference rows if several."""
    samples = [np.asarray(b, dtype=np.float64).ravel() for b in sample_blocks]
    refs = _as_reference_matrix(reference_blocks)
    n_refs = refs[0].shape[0]
    rows = []
    for mask in masks:
        for r in range(n_refs):
            rows.append(
                np.concatenate(
                    [samples[j] if mask[j] else refs[j][r] for j in range(len(samples))]
                )
            )
    out = np.asarray(value_fn(np.stack(rows)), dtype=np.float64)
    return out.reshape(len(masks), n_refs).mean(axis=1)


def shapley_exact(value_fn, sample_blocks, reference_blocks) -> np.ndarray:
    """Exact Shapley values via enumeration over all 2^d coalitions.

    value_fn maps a (rows, total_input_dim) matrix to a vector of outputs.
    """
    d = len(sample_blocks)
    if d > MAX_EXACT_FEATURES:
        raise ValueError(
            f"{d} features exceeds the exact-enumeration limit "
            f"({MAX_EXACT_FEATURES}); use shapley_sampled"
        )
    masks = np.array(
        [[(m >> j) & 1 == 1 for j in range(d)] for m in range(2**d)], dtype=bool
    )
    values = _coalition_values(value_fn, sample_blocks, reference_blocks, masks)

    fact = math.factorial
    weights = [fact(s) * fact(d - 1 - s) / fact(d) for s in range(d)]
    phi = np.zeros(d)
    for m in range(2**d):
        size = int(masks[m].sum())
        for j in range(d):
            if not masks[m][j]:
                phi[j] += weights[size] * (values[m | (1 << j)] - values[m])
    return phi


def shapley_sampled(
    value_fn, sample_blocks, reference_blocks, n_permutations: int, seed: int
) -> np.ndarray:
    """Monte Carlo permutation estimate of the Shapley values.

    For each sampled feature ordering, the marginal contribution of each
    feature as it joins the growing coalition is credited to that feature;
    values are the averages over orderings. Deterministic given the seed.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be at least 1")
    d = len(sample_blocks)
    rng = np.random.default_rng(seed)
    phi = np.zeros(d)
    chunk = max(1, 4096 // (d + 1))
    remaining = n_permutations
    while remaining > 0:
        take = min(chunk, remaining)
        remaining -= take
        perms = np.stack([rng.permutation(d) for _ in range(take)])
        # masks for the d+1 prefixes of every permutation
        masks = np.zeros((take, d + 1, d), dtype=bool)
        for step in range(d):
            masks[:, step + 1] = masks[:, step]
            masks[np.arange(take), step + 1, perms[:, step]] = True
        values = _coalition_values(
            value_fn, sample_blocks, reference_blocks, masks.reshape(-1, d)
        ).reshape(take, d + 1)
        contributions = np.diff(values, axis=1)  # (take, d), step order
        for step in range(d):
            np.add.at(phi, perms[:, step], contributions[:, step])
    return phi / n_permutations


@dataclass(frozen=True)
class AttributionConfig:
    """Options for dataset attribution."""

    target: str = "greedy"  # or "logged": which action's Q-value to explain
    n_permutations: int = 0  # 0 = exact enumeration
    seed: int = 0
    reference_inputs: np.ndarray | None = None  # (n_refs, input_dim) raw rows
    feature_names: tuple[str, ...] | None = None


@dataclass(frozen=True)
class AttributionReport:
    """Per-sample, per-feature Shapley values for one group."""

    values: np.ndarray  # (n_samples, n_features)
    feature_names: tuple[str, ...]
    baseline: float  # model output with every feature at reference
    group: int
    predictions: np.ndarray  # explained model output per sample

    def mean_abs(self) -> np.ndarray:
        return np.abs(self.values).mean(axis=0)

    def ranking(self) -> tuple[str, ...]:
        """Feature names ordered from largest to smallest mean |value|."""
        order = np.argsort(-self.mean_abs(), kind="stable")
        return tuple(self.feature_names[i] for i in order)

    def csv_rows(self) -> list[tuple[int, int, str, float]]:
        rows = []
        for i in range(self.values.shape[0]):
            for j, name in enumerate(self.feature_names):
                rows.append((i, self.group, name, float(self.values[i, j])))
        return rows

    def summary_dict(self) -> dict:
        return {
            "group": self.group,
            "baseline": self.baseline,
            "mean_abs": {
                name: float(v) for name, v in zip(self.feature_names, self.mean_abs())
            },
            "ranking": list(self.ranking()),
        }


def attribute_dataset(
    model: QModel,
    transitions: list[Transition],
    z: int,
    config: AttributionConfig = AttributionConfig(),
) -> AttributionReport:
    """Shapley attribution of Q-values over a transition list.

    Each state coordinate is one feature and the one-hot action block is one
    more. The explained output is the Q-value of the greedy action (or the
    logged action with target="logged"). The reference is the per-feature mean
    over the supplied reference rows, defaulting to the means of the given
    transitions themselves.
    """
    if not transitions:
        raise ValueError("attribution requires at least one transition")
    n_actions = model.n_actions
    x_all = build_inputs(transitions)
    p = x_all.shape[1] - n_actions

    if config.reference_inputs is not None:
        reference = np.atleast_2d(np.asarray(config.reference_inputs, dtype=np.float64))
    else:
        reference = x_all.mean(axis=0, keepdims=True)
    reference_blocks = [reference[:, [j]] for j in range(p)] + [reference[:, p:]]

    names = config.feature_names
    if names is None:
        names = CARTPOLE_FEATURES if p == 4 else tuple(f"s{j}" for j in range(p)) + ("action",)
    if len(names) != p + 1:
        raise ValueError("feature_names must cover every state dim plus the action block")

    def value_fn(rows: np.ndarray) -> np.ndarray:
        return model.value_batch(rows, np.full(rows.shape[0], float(z)))

    baseline_mask = np.zeros((1, p + 1), dtype=bool)

    values = np.zeros((len(transitions), p + 1))
    predictions = np.zeros(len(transitions))
    baseline = None
    for i, tr in enumerate(transitions):
        if config.target == "greedy":
            eye = np.eye(n_actions)
            cand = np.concatenate([np.tile(tr.state.as_array(), (n_actions, 1)), eye], axis=1)
            action_vec = eye[int(np.argmax(value_fn(cand)))]
        elif config.target == "logged":
            action_vec = tr.action.one_hot()
        else:
            raise ValueError(f"unknown attribution target {config.target!r}")
        sample_blocks = [np.array([v]) for v in tr.state.values] + [action_vec]
        if baseline is None:
            baseline = float(
                _coalition_values(value_fn, sample_blocks, reference_blocks, baseline_mask)[0]
            )
        if config.n_permutations > 0:
            values[i] = shapley_sampled(
                value_fn,
                sample_blocks,
                reference_blocks,
                config.n_permutations,
                seed=derive_seed(config.seed, TAG_ATTRIBUTE, i),
            )
        else:
            values[i] = shapley_exact(value_fn, sample_blocks, reference_blocks)
        predictions[i] = float(
            value_fn(np.concatenate([tr.state.as_array(), action_vec])[None, :])[0]
        )

    return AttributionReport(
        values=values,
        feature_names=tuple(names),
        baseline=float(baseline),
        group=z,
        predictions=predictions,
    )
