"""Two-group cart-pole simulator.

The background group (z=0) is the standard cart-pole; the foreground group
(z=1) adds a constant leftward bias force, so "push left" applies
-(action_force + bias) Newtons and "push right" applies +(action_force - bias).

Dynamics are advanced with the classic explicit-Euler cart-pole update:
both accelerations are computed from the pre-step state, positions are
integrated with pre-step velocities, then velocities with the accelerations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import BACKGROUND, FOREGROUND, Action, State, Trajectory, Transition

LEFT = 0
RIGHT = 1
N_ACTIONS = 2

START_RANGE = 0.05  # each start-state component ~ uniform(-0.05, 0.05)

PolicyFn = Callable[[State, int], Action]


@dataclass(frozen=True)
class CartpoleParams:
    """Physical constants, episode limits, and the foreground bias force."""

    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    action_force: float = 10.0
    time_step: float = 0.02
    theta_threshold: float = 12.0 * math.pi / 180.0
    x_threshold: float = 2.4
    foreground_force: float = 5.0
    max_steps: int = 1000

    def __post_init__(self) -> None:
        positive = (
            self.gravity,
            self.cart_mass,
            self.pole_mass,
            self.pole_half_length,
            self.action_force,
            self.time_step,
            self.theta_threshold,
            self.x_threshold,
        )
        if any(v <= 0 for v in positive):
            raise ValueError("cart-pole masses, lengths, forces, and thresholds must be positive")
        if self.foreground_force < 0:
            raise ValueError("foreground_force must be non-negative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    def to_dict(self) -> dict:
        return {
            "gravity": self.gravity,
            "cart_mass": self.cart_mass,
            "pole_mass": self.pole_mass,
            "pole_half_length": self.pole_half_length,
            "action_force": self.action_force,
            "time_step": self.time_step,
            "theta_threshold": self.theta_threshold,
            "x_threshold": self.x_threshold,
            "foreground_force": self.foreground_force,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CartpoleParams":
        return cls(**{k: (int(v) if k == "max_steps" else float(v)) for k, v in doc.items()})


@dataclass(frozen=True)
class EnvOutcome:
    """Result of one simulator step; reward is -1 exactly when terminal."""

    next_state: State
    reward: float
    terminal: bool

    def __post_init__(self) -> None:
        expected = -1.0 if self.terminal else 0.0
        if self.reward != expected:
            raise ValueError("reward must be -1 iff terminal, else 0")


def applied_force(action: Action, group: int, params: CartpoleParams) -> float:
    """Signed horizontal force for the chosen action, including the group bias."""
    bias = params.foreground_force if group == FOREGROUND else 0.0
    if action.id == LEFT:
        return -(params.action_force + bias)
    return params.action_force - bias


def step(state: State, action: Action, group: int, params: CartpoleParams) -> EnvOutcome:
    """Advance the cart-pole one time step under the given action and group."""
    x, x_dot, theta, theta_dot = state.values
    force = applied_force(action, group, params)

    total_mass = params.cart_mass + params.pole_mass
    pole_mass_length = params.pole_mass * params.pole_half_length
    sin_t = math.sin(theta)
    cos_t = math.cos(theta)

    temp = (force + pole_mass_length * theta_dot**2 * sin_t) / total_mass
    theta_acc = (params.gravity * sin_t - cos_t * temp) / (
        params.pole_half_length * (4.0 / 3.0 - params.pole_mass * cos_t**2 / total_mass)
    )
    x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass

    tau = params.time_step
    next_state = State(
        (
            x + tau * x_dot,
            x_dot + tau * x_acc,
            theta + tau * theta_dot,
            theta_dot + tau * theta_acc,
        )
    )
    terminal = (
        abs(next_state.values[2]) > params.theta_threshold
        or abs(next_state.values[0]) > params.x_threshold
    )
    return EnvOutcome(next_state, -1.0 if terminal else 0.0, terminal)


def random_start(rng: np.random.Generator) -> State:
    """Start state with all four components i.i.d. uniform on [-0.05, 0.05]."""
    return State(tuple(rng.uniform(-START_RANGE, START_RANGE, size=4).tolist()))


def collect_random_trajectory(
    group: int, params: CartpoleParams, rng: np.random.Generator
) -> Trajectory:
    """Roll a uniform-random policy from a random start until failure or max_steps."""
    state = random_start(rng)
    steps: list[Transition] = []
    for _ in range(params.max_steps):
        action = Action(int(rng.integers(0, N_ACTIONS)), N_ACTIONS)
        outcome = step(state, action, group, params)
        steps.append(
            Transition(state, action, outcome.next_state, outcome.reward, outcome.terminal, group)
        )
        if outcome.terminal:
            break
        state = outcome.next_state
    return Trajectory(tuple(steps), group)


def rollout_policy(
    policy: PolicyFn, group: int, params: CartpoleParams, rng: np.random.Generator
) -> int:
    """Steps survived (non-terminal steps) from a random start, capped at max_steps."""
    state = random_start(rng)
    survived = 0
    while survived < params.max_steps:
        outcome = step(state, policy(state, group), group, params)
        if outcome.terminal:
            break
        survived += 1
        state = outcome.next_state
    return survived


def generate_dataset(
    n_background: int, n_foreground: int, params: CartpoleParams, seed: int
):
    """Random-policy dataset with per-trajectory seed streams derived from
    (seed, trajectory index), so collection order and parallelism cannot change it."""
    from .data import NestedDataset  # local import to keep module load order flat
    from .seeding import child_rng, TAG_DATA

    background = tuple(
        collect_random_trajectory(BACKGROUND, params, child_rng(seed, TAG_DATA, i))
        for i in range(n_background)
    )
    foreground = tuple(
        collect_random_trajectory(FOREGROUND, params, child_rng(seed, TAG_DATA, n_background + i))
        for i in range(n_foreground)
    )
    return NestedDataset(background, foreground)
