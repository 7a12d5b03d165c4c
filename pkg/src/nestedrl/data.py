"""Core MDP data model: states, actions, transitions, trajectories, and the
two-group (background/foreground) dataset with splitting and relabeling utilities.

All types are immutable after construction and all operations are pure
functions of their inputs and an explicit seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import serialize

BACKGROUND = 0
FOREGROUND = 1


@dataclass(frozen=True)
class State:
    """Environment state: a fixed-dimension vector of finite floats."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("invalid state: non-finite component")

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class Action:
    """Discrete action: an index into a finite action set of size n_actions."""

    id: int
    n_actions: int

    def __post_init__(self) -> None:
        if not 0 <= self.id < self.n_actions:
            raise ValueError(f"action id {self.id} outside [0, {self.n_actions})")

    def one_hot(self) -> np.ndarray:
        enc = np.zeros(self.n_actions, dtype=np.float64)
        enc[self.id] = 1.0
        return enc


@dataclass(frozen=True)
class Transition:
    """One MDP step: (state, action, next state, reward, terminal flag, group label)."""

    state: State
    action: Action
    next_state: State
    reward: float
    terminal: bool
    group: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ValueError("transition reward must be finite")
        if self.group not in (BACKGROUND, FOREGROUND):
            raise ValueError(f"group must be 0 or 1, got {self.group}")


@dataclass(frozen=True)
class Trajectory:
    """An ordered episode of transitions sharing one group label.

    Consecutive transitions chain exactly (next_state of step i equals state of
    step i+1) and only the final transition may be terminal.
    """

    transitions: tuple[Transition, ...]
    group: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if not self.transitions:
            raise ValueError("trajectory must contain at least one transition")
        for i, tr in enumerate(self.transitions):
            if tr.group != self.group:
                raise ValueError("transition group differs from trajectory group")
            if tr.terminal and i != len(self.transitions) - 1:
                raise ValueError("terminal transition before end of trajectory")
            if i > 0 and self.transitions[i - 1].next_state.values != tr.state.values:
                raise ValueError(f"state chain broken at step {i}")

    def __len__(self) -> int:
        return len(self.transitions)

    def relabeled(self, group: int) -> "Trajectory":
        """Copy of this trajectory with every transition carrying `group`."""
        if group == self.group:
            return self
        steps = tuple(replace(tr, group=group) for tr in self.transitions)
        return Trajectory(steps, group)


@dataclass(frozen=True)
class NestedDataset:
    """Trajectory store partitioned into background (z=0) and foreground (z=1)."""

    background: tuple[Trajectory, ...]
    foreground: tuple[Trajectory, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "background", tuple(self.background))
        object.__setattr__(self, "foreground", tuple(self.foreground))
        for traj in self.background:
            if traj.group != BACKGROUND:
                raise ValueError("foreground trajectory stored in background partition")
        for traj in self.foreground:
            if traj.group != FOREGROUND:
                raise ValueError("background trajectory stored in foreground partition")

    @property
    def trajectories(self) -> tuple[Trajectory, ...]:
        return self.background + self.foreground

    def n_transitions(self) -> int:
        return sum(len(t) for t in self.trajectories)


def flatten(ds: NestedDataset) -> list[Transition]:
    """All transitions in deterministic background-then-foreground, trajectory order."""
    return [tr for traj in ds.trajectories for tr in traj.transitions]


def split_train_test(
    ds: NestedDataset, train_fraction: float, seed: int
) -> tuple[NestedDataset, NestedDataset]:
    """Split at trajectory granularity, stratified by group.

    Each group contributes round(train_fraction * n) trajectories to the train
    partition (round = half away from zero) and the remainder to test.
    Deterministic given the seed; relative trajectory order is preserved.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    parts: dict[str, list[tuple[Trajectory, ...]]] = {"train": [], "test": []}
    for group_trajs in (ds.background, ds.foreground):
        n = len(group_trajs)
        if n < 2:
            raise ValueError("group too small to split")
        n_train = int(math.floor(train_fraction * n + 0.5))
        perm = rng.permutation(n)
        train_idx = set(perm[:n_train].tolist())
        parts["train"].append(tuple(t for i, t in enumerate(group_trajs) if i in train_idx))
        parts["test"].append(tuple(t for i, t in enumerate(group_trajs) if i not in train_idx))
    train = NestedDataset(parts["train"][0], parts["train"][1])
    test = NestedDataset(parts["test"][0], parts["test"][1])
    return train, test


def structureless_relabel(ds: NestedDataset, seed: int) -> NestedDataset:
    """Permute the existing multiset of group labels uniformly at random.

    Group sizes are preserved; labels are reassigned at trajectory granularity
    and every transition inside a trajectory carries the new label.
    """
    trajs = ds.trajectories
    labels = np.array([t.group for t in trajs], dtype=np.int64)
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(labels)
    background = tuple(
        t.relabeled(BACKGROUND) for t, z in zip(trajs, shuffled) if z == BACKGROUND
    )
    foreground = tuple(
        t.relabeled(FOREGROUND) for t, z in zip(trajs, shuffled) if z == FOREGROUND
    )
    return NestedDataset(background, foreground)


# --- JSON Lines serialization -------------------------------------------------
# One trajectory per line:
# {"group": 0|1, "steps": [{"s": [...], "a": int, "s2": [...], "r": float, "done": bool}, ...]}


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "group": traj.group,
        "steps": [
            {
                "s": list(tr.state.values),
                "a": tr.action.id,
                "s2": list(tr.next_state.values),
                "r": tr.reward,
                "done": tr.terminal,
            }
            for tr in traj.transitions
        ],
    }


def trajectory_from_dict(doc: dict, n_actions: int) -> Trajectory:
    group = int(doc["group"])
    steps = tuple(
        Transition(
            state=State(tuple(float(v) for v in step["s"])),
            action=Action(int(step["a"]), n_actions),
            next_state=State(tuple(float(v) for v in step["s2"])),
            reward=float(step["r"]),
            terminal=bool(step["done"]),
            group=group,
        )
        for step in doc["steps"]
    )
    return Trajectory(steps, group)


def save_jsonl(ds: NestedDataset, path: str | Path) -> None:
    lines = [serialize.dumps(trajectory_to_dict(t)) for t in ds.trajectories]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_jsonl(path: str | Path, n_actions: int) -> NestedDataset:
    background: list[Trajectory] = []
    foreground: list[Trajectory] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        traj = trajectory_from_dict(json.loads(line), n_actions)
        (background if traj.group == BACKGROUND else foreground).append(traj)
    return NestedDataset(tuple(background), tuple(foreground))
