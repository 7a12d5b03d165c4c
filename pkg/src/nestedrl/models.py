"""Q-value function families with forward evaluation, analytic gradients, and
SGD updates, all in plain numpy.

Two families are provided:

* ``NestedQModel`` — a two-branch multilayer perceptron. A shared trunk maps
  the input [state ; one-hot action] through Linear->ReLU layers; a shared
  linear head reads the trunk's final activation, and a foreground branch
  (its own Linear->ReLU stack plus linear head) reads that same activation.
  The output is ``shared_head + g_f`` for foreground samples (z=1) and
  ``shared_head`` alone for background samples (z=0).

* ``LinearQModel`` — shared and foreground linear coefficients over the same
  input vector: z=0 gives x.beta_s + b0s, z=1 gives x.(beta_s+beta_f) + b0s + b0f.

Both expose the same batch interface (``value_batch`` / ``grad_batch`` /
``updated``) so the training loops are model-agnostic. Gradients are exact
analytic derivatives of the squared error (target - f)^2; a frozen-partition
mask can zero the shared or foreground partition for staged training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import serialize
from .data import Action, State, Transition

Layer = tuple[np.ndarray, np.ndarray]  # weight (fan_in, fan_out), bias (fan_out,)


@dataclass(frozen=True)
class ParamMask:
    """Which parameter partitions an update may touch."""

    update_shared: bool = True
    update_foreground: bool = True


FULL_UPDATE = ParamMask(True, True)
SHARED_ONLY = ParamMask(True, False)
FOREGROUND_ONLY = ParamMask(False, True)


@dataclass(frozen=True)
class ModelGrads:
    """Gradients mirroring a model's (shared, foreground) parameter lists."""

    shared: list[Layer]
    foreground: list[Layer]

    def as_vector(self) -> np.ndarray:
        parts = [a.ravel() for w_b in self.shared + self.foreground for a in w_b]
        return np.concatenate(parts)


@dataclass(frozen=True)
class NestedArch:
    """Layer widths for the nested MLP: trunk feeds both the shared head and
    the foreground branch. input_dim = state dim + n_actions (one-hot block)."""

    input_dim: int
    n_actions: int
    trunk_widths: tuple[int, ...] = (10, 5)
    fg_widths: tuple[int, ...] = (10, 5)

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not 1 <= self.n_actions <= self.input_dim:
            raise ValueError("n_actions must lie in [1, input_dim]")
        if any(w < 1 for w in self.trunk_widths + self.fg_widths):
            raise ValueError("layer widths must be positive")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "n_actions": self.n_actions,
            "trunk_widths": list(self.trunk_widths),
            "fg_widths": list(self.fg_widths),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NestedArch":
        return cls(
            int(doc["input_dim"]),
            int(doc["n_actions"]),
            tuple(int(w) for w in doc["trunk_widths"]),
            tuple(int(w) for w in doc["fg_widths"]),
        )


def build_input(state: State, action: Action) -> np.ndarray:
    """Raw model input for one sample: [state ; one-hot action]."""
    return np.concatenate([state.as_array(), action.one_hot()])


def build_inputs(transitions: list[Transition]) -> np.ndarray:
    """(N, p + |A|) raw input matrix in transition order."""
    if not transitions:
        raise ValueError("transition list is empty")
    return np.stack([build_input(tr.state, tr.action) for tr in transitions])


def _chain_forward(x: np.ndarray, layers: list[Layer]) -> list[np.ndarray]:
    """Activations [input, relu_1, ..., relu_L] through an affine+ReLU stack."""
    acts = [x]
    for w, b in layers:
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    return acts


def _chain_backward(
    layers: list[Layer], acts: list[np.ndarray], upstream: np.ndarray
) -> tuple[list[Layer], np.ndarray]:
    """Gradients for an affine+ReLU stack; returns (per-layer grads, grad wrt input)."""
    grads: list[Layer] = [None] * len(layers)  # type: ignore[list-item]
    g = upstream
    for j in range(len(layers) - 1, -1, -1):
        w, _ = layers[j]
        g = g * (acts[j + 1] > 0)
        grads[j] = (acts[j].T @ g, g.sum(axis=0))
        g = g @ w.T
    return grads, g


@dataclass(frozen=True)
class NestedQModel:
    """Two-branch MLP Q-function with optional per-dimension input normalization.

    ``shared`` holds the trunk layers plus the shared linear head (last entry);
    ``foreground`` holds the foreground branch layers plus its head. The
    foreground branch consumes the trunk's final activation.
    """

    arch: NestedArch
    shared: tuple[Layer, ...]
    foreground: tuple[Layer, ...]
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    stage_tag: str = "init"

    @property
    def n_actions(self) -> int:
        return self.arch.n_actions

    # -- evaluation ------------------------------------------------------

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        if self.norm_mean is None:
            return x
        return (x - self.norm_mean) / self.norm_std

    def _forward_parts(self, x: np.ndarray, z: np.ndarray):
        xn = self._normalize(x)
        trunk_acts = _chain_forward(xn, list(self.shared[:-1]))
        w_head, b_head = self.shared[-1]
        g_s = (trunk_acts[-1] @ w_head + b_head)[:, 0]
        fg_acts = _chain_forward(trunk_acts[-1], list(self.foreground[:-1]))
        v_head, c_head = self.foreground[-1]
        g_f = (fg_acts[-1] @ v_head + c_head)[:, 0]
        out = np.where(z == 1.0, g_s + g_f, g_s)
        return out, g_s, g_f, trunk_acts, fg_acts

    def value_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Q-values for raw inputs x (N, input_dim) and group labels z (N,)."""
        if x.shape[1] != self.arch.input_dim:
            raise ValueError(f"expected input dim {self.arch.input_dim}, got {x.shape[1]}")
        return self._forward_parts(x, np.asarray(z, dtype=np.float64))[0]

    def foreground_value_batch(self, x: np.ndarray) -> np.ndarray:
        """The foreground branch contribution g_f alone."""
        return self._forward_parts(x, np.zeros(x.shape[0]))[2]

    # -- gradients ---------------------------------------------------------

    def grad_batch(
        self,
        x: np.ndarray,
        z: np.ndarray,
        targets: np.ndarray,
        scale: float = 1.0,
        mask: ParamMask = FULL_UPDATE,
    ) -> ModelGrads:
        """Gradient of scale * sum_i (target_i - f_i)^2 over all parameters.

        The full analytic gradient is computed (the trunk feeds both heads, so
        shared parameters receive the foreground-branch path for z=1 samples);
        frozen partitions per `mask` are zeroed afterwards.
        """
        z = np.asarray(z, dtype=np.float64)
        out, _, _, trunk_acts, fg_acts = self._forward_parts(x, z)
        delta = (2.0 * scale * (out - targets))[:, None]  # dLoss/d out, column

        d_gf = delta * z[:, None]
        v_head, _ = self.foreground[-1]
        fg_head_grad = (fg_acts[-1].T @ d_gf, d_gf.sum(axis=0))
        fg_grads, g_to_trunk = _chain_backward(
            list(self.foreground[:-1]), fg_acts, d_gf @ v_head.T
        )
        fg_grads.append(fg_head_grad)

        w_head, _ = self.shared[-1]
        head_grad = (trunk_acts[-1].T @ delta, delta.sum(axis=0))
        trunk_grads, _ = _chain_backward(
            list(self.shared[:-1]), trunk_acts, delta @ w_head.T + g_to_trunk
        )
        trunk_grads.append(head_grad)

        if not mask.update_shared:
            trunk_grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in trunk_grads]
        if not mask.update_foreground:
            fg_grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in fg_grads]
        return ModelGrads(shared=trunk_grads, foreground=fg_grads)

    # -- updates -----------------------------------------------------------

    def updated(self, grads: ModelGrads, learning_rate: float, mask: ParamMask) -> "NestedQModel":
        shared = self.shared
        foreground = self.foreground
        if mask.update_shared:
            shared = tuple(
                (w - learning_rate * gw, b - learning_rate * gb)
                for (w, b), (gw, gb) in zip(shared, grads.shared)
            )
        if mask.update_foreground:
            foreground = tuple(
                (w - learning_rate * gw, b - learning_rate * gb)
                for (w, b), (gw, gb) in zip(foreground, grads.foreground)
            )
        return replace(self, shared=shared, foreground=foreground)

    # -- bookkeeping ---------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in self.shared + self.foreground)

    def param_vector(self) -> np.ndarray:
        parts = [a.ravel() for w_b in self.shared + self.foreground for a in w_b]
        return np.concatenate(parts)

    def with_param_vector(self, vec: np.ndarray) -> "NestedQModel":
        offset = 0
        new_lists: list[list[Layer]] = []
        for layers in (self.shared, self.foreground):
            new_layers: list[Layer] = []
            for w, b in layers:
                nw = vec[offset : offset + w.size].reshape(w.shape).copy()
                offset += w.size
                nb = vec[offset : offset + b.size].reshape(b.shape).copy()
                offset += b.size
                new_layers.append((nw, nb))
            new_lists.append(new_layers)
        if offset != vec.size:
            raise ValueError("parameter vector length mismatch")
        return replace(self, shared=tuple(new_lists[0]), foreground=tuple(new_lists[1]))

    def to_dict(self) -> dict:
        def layers_doc(layers: tuple[Layer, ...]) -> list[dict]:
            return [
                {"w": w.ravel().tolist(), "b": b.tolist(), "shape": list(w.shape)}
                for w, b in layers
            ]

        return {
            "kind": "nested",
            "arch": self.arch.to_dict(),
            "shared": layers_doc(self.shared),
            "foreground": layers_doc(self.foreground),
            "norm_mean": None if self.norm_mean is None else self.norm_mean.tolist(),
            "norm_std": None if self.norm_std is None else self.norm_std.tolist(),
            "stage_tag": self.stage_tag,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NestedQModel":
        def layers_from(doc_layers: list[dict]) -> tuple[Layer, ...]:
            out = []
            for entry in doc_layers:
                shape = tuple(entry["shape"])
                w = np.asarray(entry["w"], dtype=np.float64).reshape(shape)
                b = np.asarray(entry["b"], dtype=np.float64)
                out.append((w, b))
            return tuple(out)

        return cls(
            arch=NestedArch.from_dict(doc["arch"]),
            shared=layers_from(doc["shared"]),
            foreground=layers_from(doc["foreground"]),
            norm_mean=None if doc["norm_mean"] is None else np.asarray(doc["norm_mean"]),
            norm_std=None if doc["norm_std"] is None else np.asarray(doc["norm_std"]),
            stage_tag=doc["stage_tag"],
        )


@dataclass(frozen=True)
class LinearQModel:
    """Linear Q-function: shared coefficients plus foreground adjustments."""

    beta_shared: np.ndarray
    intercept_shared: float
    beta_foreground: np.ndarray
    intercept_foreground: float
    n_actions: int = 1
    stage_tag: str = "init"

    def __post_init__(self) -> None:
        if self.beta_shared.shape != self.beta_foreground.shape:
            raise ValueError("shared and foreground coefficient dimensions differ")

    @property
    def input_dim(self) -> int:
        return self.beta_shared.size

    def value_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[1]}")
        z = np.asarray(z, dtype=np.float64)
        base = x @ self.beta_shared + self.intercept_shared
        extra = x @ self.beta_foreground + self.intercept_foreground
        return np.where(z == 1.0, base + extra, base)

    def foreground_value_batch(self, x: np.ndarray) -> np.ndarray:
        return x @ self.beta_foreground + self.intercept_foreground

    def grad_batch(
        self,
        x: np.ndarray,
        z: np.ndarray,
        targets: np.ndarray,
        scale: float = 1.0,
        mask: ParamMask = FULL_UPDATE,
    ) -> ModelGrads:
        z = np.asarray(z, dtype=np.float64)
        delta = 2.0 * scale * (self.value_batch(x, z) - targets)
        if mask.update_shared:
            shared = [(x.T @ delta, np.array([delta.sum()]))]
        else:
            shared = [(np.zeros_like(self.beta_shared), np.zeros(1))]
        if mask.update_foreground:
            dz = delta * z
            foreground = [(x.T @ dz, np.array([dz.sum()]))]
        else:
            foreground = [(np.zeros_like(self.beta_foreground), np.zeros(1))]
        return ModelGrads(shared=shared, foreground=foreground)

    def updated(self, grads: ModelGrads, learning_rate: float, mask: ParamMask) -> "LinearQModel":
        bs, b0s = self.beta_shared, self.intercept_shared
        bf, b0f = self.beta_foreground, self.intercept_foreground
        if mask.update_shared:
            gw, gb = grads.shared[0]
            bs = bs - learning_rate * gw
            b0s = b0s - learning_rate * float(gb[0])
        if mask.update_foreground:
            gw, gb = grads.foreground[0]
            bf = bf - learning_rate * gw
            b0f = b0f - learning_rate * float(gb[0])
        return replace(
            self,
            beta_shared=bs,
            intercept_shared=b0s,
            beta_foreground=bf,
            intercept_foreground=b0f,
        )

    def parameter_count(self) -> int:
        return 2 * self.beta_shared.size + 2

    def param_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.beta_shared,
                [self.intercept_shared],
                self.beta_foreground,
                [self.intercept_foreground],
            ]
        )

    def with_param_vector(self, vec: np.ndarray) -> "LinearQModel":
        d = self.input_dim
        if vec.size != 2 * d + 2:
            raise ValueError("parameter vector length mismatch")
        return replace(
            self,
            beta_shared=vec[:d].copy(),
            intercept_shared=float(vec[d]),
            beta_foreground=vec[d + 1 : 2 * d + 1].copy(),
            intercept_foreground=float(vec[2 * d + 1]),
        )

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "beta_shared": self.beta_shared.tolist(),
            "intercept_shared": self.intercept_shared,
            "beta_foreground": self.beta_foreground.tolist(),
            "intercept_foreground": self.intercept_foreground,
            "n_actions": self.n_actions,
            "stage_tag": self.stage_tag,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearQModel":
        return cls(
            beta_shared=np.asarray(doc["beta_shared"], dtype=np.float64),
            intercept_shared=float(doc["intercept_shared"]),
            beta_foreground=np.asarray(doc["beta_foreground"], dtype=np.float64),
            intercept_foreground=float(doc["intercept_foreground"]),
            n_actions=int(doc["n_actions"]),
            stage_tag=doc["stage_tag"],
        )


QModel = NestedQModel | LinearQModel


# --- construction ---------------------------------------------------------


def init_params(arch: NestedArch, seed: int) -> NestedQModel:
    """Random initialization: weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    biases zero. Deterministic given the seed."""
    rng = np.random.default_rng(seed)

    def make_layers(dims: list[int]) -> tuple[Layer, ...]:
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
        return tuple(layers)

    trunk_out = arch.trunk_widths[-1] if arch.trunk_widths else arch.input_dim
    shared = make_layers([arch.input_dim, *arch.trunk_widths, 1])
    foreground = make_layers([trunk_out, *arch.fg_widths, 1])
    return NestedQModel(arch=arch, shared=shared, foreground=foreground)


def init_linear(input_dim: int, n_actions: int, seed: int) -> LinearQModel:
    """Random linear coefficients with the same fan-in scaling, intercepts zero."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(input_dim)
    return LinearQModel(
        beta_shared=rng.uniform(-bound, bound, size=input_dim),
        intercept_shared=0.0,
        beta_foreground=rng.uniform(-bound, bound, size=input_dim),
        intercept_foreground=0.0,
        n_actions=n_actions,
    )


def fit_norm_stats(model: NestedQModel, transitions: list[Transition]) -> NestedQModel:
    """Per-dimension mean/std over all training input vectors, applied inside
    forward. Zero-variance dimensions are clamped to std 1."""
    if not transitions:
        raise ValueError("cannot fit normalization statistics on empty input")
    x = build_inputs(transitions)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std <= 1e-12, 1.0, std)
    return replace(model, norm_mean=mean, norm_std=std)


# --- spec-level single-sample operations -----------------------------------


def forward(model: QModel, state: State, action: Action, z: int) -> float:
    """Q-value for one (state, action, group) triple."""
    x = build_input(state, action)[None, :]
    return float(model.value_batch(x, np.array([float(z)]))[0])


def forward_linear(model: LinearQModel, state: State, action: Action, z: int) -> float:
    if not isinstance(model, LinearQModel):
        raise TypeError("forward_linear expects a LinearQModel")
    return forward(model, state, action, z)


def forward_augmented(model: QModel, augmented_values, action: Action) -> float:
    """Evaluate with the group label carried as the last state coordinate.

    The label is split off and routed as z, so this is exactly the plain-FQI
    view of the two-branch model over an augmented state space.
    """
    values = tuple(float(v) for v in augmented_values)
    z = values[-1]
    if z not in (0.0, 1.0):
        raise ValueError("augmented state must end with a 0/1 group coordinate")
    return forward(model, State(values[:-1]), action, int(z))


def gradient(
    model: QModel,
    state: State,
    action: Action,
    z: int,
    target: float,
    mask: ParamMask = FULL_UPDATE,
) -> ModelGrads:
    """Exact gradient of (target - forward)^2 for one sample."""
    x = build_input(state, action)[None, :]
    return model.grad_batch(x, np.array([float(z)]), np.array([target]), scale=1.0, mask=mask)


def sgd_update(
    model: QModel, grads: ModelGrads, learning_rate: float, mask: ParamMask = FULL_UPDATE
) -> QModel:
    """params <- params - learning_rate * gradient on unmasked partitions."""
    return model.updated(grads, learning_rate, mask)


# --- checkpoint io -----------------------------------------------------------


def save_model(model: QModel, path: str | Path) -> None:
    serialize.dump_path(model.to_dict(), path)


def load_model(path: str | Path) -> QModel:
    doc = serialize.load_path(path)
    if doc["kind"] == "nested":
        return NestedQModel.from_dict(doc)
    if doc["kind"] == "linear":
        return LinearQModel.from_dict(doc)
    raise ValueError(f"unknown model kind {doc['kind']!r}")
