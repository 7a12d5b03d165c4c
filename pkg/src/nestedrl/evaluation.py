"""Policy evaluation: repeated simulator rollouts with confidence intervals,
and the action-matching metric for batch (offline) data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cartpole import CartpoleParams, PolicyFn, rollout_policy
from .data import Transition
from .seeding import TAG_EVAL, child_rng


@dataclass(frozen=True)
class EvalReport:
    """Per-policy rollout statistics over repeated episodes."""

    steps: tuple[int, ...]
    mean: float
    ci95_low: float
    ci95_high: float
    group: int
    policy_tag: str = ""

    def __post_init__(self) -> None:
        if not self.ci95_low <= self.mean <= self.ci95_high:
            raise ValueError("confidence interval must contain the mean")

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_tag,
            "group": self.group,
            "mean": self.mean,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
            "n": len(self.steps),
            "steps": list(self.steps),
        }


def confidence_intervals_overlap(a: EvalReport, b: EvalReport) -> bool:
    return a.ci95_low <= b.ci95_high and b.ci95_low <= a.ci95_high


def evaluate_policy(
    policy: PolicyFn,
    group: int,
    params: CartpoleParams,
    repetitions: int,
    seed: int,
    policy_tag: str = "",
    ci_method: str = "normal",
    n_bootstrap: int = 2000,
) -> EvalReport:
    """Run independent rollouts from fresh random starts and summarize.

    The default interval is the normal approximation mean +/- 1.96*s/sqrt(n);
    ci_method="bootstrap" uses a seeded percentile bootstrap instead. Each
    repetition draws from its own stream derived from (seed, repetition index).
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    steps = [
        rollout_policy(policy, group, params, child_rng(seed, TAG_EVAL, i))
        for i in range(repetitions)
    ]
    values = np.asarray(steps, dtype=np.float64)
    mean = float(values.mean())
    if ci_method == "normal":
        spread = float(values.std(ddof=1)) if repetitions > 1 else 0.0
        half = 1.96 * spread / np.sqrt(repetitions)
        low, high = mean - half, mean + half
    elif ci_method == "bootstrap":
        rng = child_rng(seed, TAG_EVAL, repetitions, 999)
        resampled = rng.choice(values, size=(n_bootstrap, repetitions), replace=True).mean(axis=1)
        low = min(float(np.percentile(resampled, 2.5)), mean)
        high = max(float(np.percentile(resampled, 97.5)), mean)
    else:
        raise ValueError(f"unknown ci_method {ci_method!r}")
    return EvalReport(tuple(steps), mean, low, high, group, policy_tag)


@dataclass(frozen=True)
class MatchReport:
    """Agreement between a policy's greedy actions and logged actions."""

    accuracy: float  # percent
    macro_f1: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    confusion: tuple[tuple[int, ...], ...]  # rows = logged class, cols = predicted

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "support": list(self.support),
            "confusion": [list(r) for r in self.confusion],
        }


def match_report_from_labels(truth: np.ndarray, preds: np.ndarray, n_classes: int) -> MatchReport:
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (truth, preds), 1)
    total = confusion.sum()
    accuracy = 100.0 * float(np.trace(confusion)) / float(total)

    precision, recall, f1 = [], [], []
    for c in range(n_classes):
        tp = confusion[c, c]
        predicted = confusion[:, c].sum()
        actual = confusion[c, :].sum()
        p = float(tp / predicted) if predicted else 0.0
        r = float(tp / actual) if actual else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2.0 * p * r / (p + r) if (p + r) > 0 else 0.0)
    return MatchReport(
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)),
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        support=tuple(int(s) for s in confusion.sum(axis=1)),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
    )


def action_matching(policy: PolicyFn, transitions: list[Transition]) -> MatchReport:
    """Compare the policy's action to the logged action on every transition.

    Accuracy is a percentage; F1 is macro-averaged over all action ids in the
    action set (classes absent from both truth and predictions contribute 0).
    """
    if not transitions:
        raise ValueError("action matching requires at least one transition")
    n_classes = transitions[0].action.n_actions
    truth = np.array([tr.action.id for tr in transitions], dtype=np.int64)
    preds = np.array(
        [policy(tr.state, tr.group).id for tr in transitions], dtype=np.int64
    )
    return match_report_from_labels(truth, preds, n_classes)
