"""Electrolyte-repletion reward function and a synthetic patient cohort.

The reward is a weighted sum of four penalty components: one per
administration route (oral / intravenous) and one sigmoid-shaped penalty per
side of the healthy potassium window. The synthetic cohort exists so the
nested training, action-matching, and policy-heatmap pipelines can run end to
end; its dynamics are invented and carry no clinical meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import BACKGROUND, FOREGROUND, Action, NestedDataset, State, Trajectory, Transition
from .seeding import TAG_DATA, child_rng

K_INDEX = 0  # potassium position in the clinical state vector
CREATININE_INDEX = 1

CLINICAL_FEATURES = ("potassium", "creatinine", "nuisance_0", "nuisance_1")
N_REPLETION_ACTIONS = 3


@dataclass(frozen=True)
class RepletionAction:
    """Dose pair for one discrete repletion level; at most one route active."""

    oral_dose: float
    iv_dose: float

    def __post_init__(self) -> None:
        if self.oral_dose < 0 or self.iv_dose < 0:
            raise ValueError("doses must be non-negative")
        if self.oral_dose > 0 and self.iv_dose > 0:
            raise ValueError("at most one administration route per action")

    @property
    def oral(self) -> bool:
        return self.oral_dose > 0

    @property
    def intravenous(self) -> bool:
        return self.iv_dose > 0


# action ids 0/1/2 = no repletion, low (oral 10), high (intravenous 10)
REPLETION_SET: tuple[RepletionAction, ...] = (
    RepletionAction(0.0, 0.0),
    RepletionAction(10.0, 0.0),
    RepletionAction(0.0, 10.0),
)


@dataclass(frozen=True)
class RewardParams:
    """Weights, healthy potassium window, and sigmoid steepness.

    The printed form of the low-potassium penalty reuses the high-side
    indicator and inverted sigmoid; the default here is the low-side mirror of
    the high-side penalty (grows toward -10 as potassium falls). Set
    low_side_as_printed=True for the literal variant.
    """

    w: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    k_min: float = 3.5
    k_max: float = 4.5
    sigma: float = 1.0
    low_side_as_printed: bool = False

    def __post_init__(self) -> None:
        if not self.k_min < self.k_max:
            raise ValueError("k_min must be below k_max")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def _sigmoid(u: float) -> float:
    return 1.0 / (1.0 + math.exp(-u))


def phi(
    s_t: State, a_t: RepletionAction, s_next: State, params: RewardParams
) -> np.ndarray:
    """Four penalty components: oral cost, IV cost, high-K penalty, low-K penalty.

    Components lie in [-1, 0], [-1, 0], (-10, 0], (-10, 0] respectively.
    """
    k = s_next.values[K_INDEX]
    if not math.isfinite(k):
        raise ValueError("potassium measurement must be finite")
    oral_cost = -1.0 if a_t.oral else 0.0
    iv_cost = -1.0 if a_t.intravenous else 0.0
    high = -10.0 * _sigmoid(params.sigma * (k - params.k_max - 1.0)) if k > params.k_max else 0.0
    if params.low_side_as_printed:
        low = (
            -10.0 * (1.0 - _sigmoid(params.sigma * (k - params.k_max - 1.0)))
            if k > params.k_max
            else 0.0
        )
    else:
        low = -10.0 * _sigmoid(params.sigma * (params.k_min - k - 1.0)) if k < params.k_min else 0.0
    return np.array([oral_cost, iv_cost, high, low])


def reward(
    s_t: State, a_t: RepletionAction, s_next: State, params: RewardParams
) -> float:
    """r = w . phi(s_t, a_t, s_next)."""
    return float(np.dot(np.asarray(params.w, dtype=np.float64), phi(s_t, a_t, s_next, params)))


def repletion_action(action: Action) -> RepletionAction:
    return REPLETION_SET[action.id]


def _simulate_patient(
    group: int,
    length: int,
    reward_params: RewardParams,
    rng: np.random.Generator,
) -> Trajectory:
    potassium = float(np.clip(rng.normal(4.0, 0.5), 2.6, 6.2))
    if group == BACKGROUND:
        creatinine = float(max(rng.normal(0.9, 0.15), 0.4))
    else:
        creatinine = float(max(rng.normal(2.4, 0.5), 1.2))
    creat_base = creatinine
    nuisance = rng.normal(0.0, 1.0, size=2)

    state = State((potassium, creatinine, float(nuisance[0]), float(nuisance[1])))
    steps: list[Transition] = []
    for t in range(length):
        action = Action(int(rng.integers(0, N_REPLETION_ACTIONS)), N_REPLETION_ACTIONS)
        dose = repletion_action(action)
        effect = 0.018 * dose.oral_dose + 0.03 * dose.iv_dose
        k = state.values[K_INDEX]
        creat = state.values[CREATININE_INDEX]
        if group == BACKGROUND:
            drift = 0.15 * (3.7 - k)
            k_next = k + drift + effect + float(rng.normal(0.0, 0.08))
        else:
            # renal-like group: stronger downward pull, creatinine-coupled,
            # and an amplified response to repletion
            drift = 0.35 * (3.1 - k) - 0.04 * (creat - 1.0)
            k_next = k + drift + 1.5 * effect + float(rng.normal(0.0, 0.12))
        creat_next = creat + 0.05 * (creat_base - creat) + float(rng.normal(0.0, 0.03))
        nuis_next = 0.8 * np.array(state.values[2:]) + rng.normal(0.0, 0.25, size=2)
        next_state = State(
            (
                float(np.clip(k_next, 1.5, 8.0)),
                float(max(creat_next, 0.3)),
                float(nuis_next[0]),
                float(nuis_next[1]),
            )
        )
        r = reward(state, dose, next_state, reward_params)
        steps.append(Transition(state, action, next_state, r, t == length - 1, group))
        state = next_state
    return Trajectory(tuple(steps), group)


def synth_cohort(
    n_background: int,
    n_foreground: int,
    seed: int,
    episode_length: int = 12,
    reward_params: RewardParams = RewardParams(),
) -> NestedDataset:
    """Synthetic two-group cohort under a uniform-random repletion policy.

    Deterministic given the seed: each patient draws from a stream derived
    from (seed, patient index).
    """
    if n_background < 1 or n_foreground < 1:
        raise ValueError("both cohort sizes must be at least 1")
    background = tuple(
        _simulate_patient(BACKGROUND, episode_length, reward_params, child_rng(seed, TAG_DATA, i))
        for i in range(n_background)
    )
    foreground = tuple(
        _simulate_patient(
            FOREGROUND, episode_length, reward_params, child_rng(seed, TAG_DATA, n_background + i)
        )
        for i in range(n_foreground)
    )
    return NestedDataset(background, foreground)
