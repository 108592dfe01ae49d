"""Small feed-forward binary classifiers with a scalar sigmoid confidence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import interval as iv
from .interval import Box, Interval


class Activation(str, Enum):
    LINEAR = "linear"
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"

    def __call__(self, z):
        if self is Activation.LINEAR:
            return z
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.SIGMOID:
            return iv.sigmoid(z)
        return np.tanh(z)

    def on_interval(self, lo, hi):
        if self is Activation.LINEAR:
            return lo, hi
        if self is Activation.RELU:
            return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        if self is Activation.SIGMOID:
            return iv.isigmoid(lo, hi)
        return iv.itanh(lo, hi)


def _frozen_array(a, ndim: int) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation = Activation.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen_array(self.weights, 2))
        object.__setattr__(self, "biases", _frozen_array(self.biases, 1))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError(
                f"weights have {self.weights.shape[0]} rows but biases have length {self.biases.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.biases.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Layer):
            return NotImplemented
        return (
            self.activation == other.activation
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
        )


@dataclass(frozen=True, eq=False)
class Network:
    """Layered network ending in a single sigmoid node.

    ``frozen`` lists flat parameter indices that perturbations must leave
    untouched (used for toy models whose remaining coefficients are fixed
    constants rather than trainable parameters).
    """

    layers: tuple[Layer, ...]
    input_dim: int
    level: float = 0.5
    frozen: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "frozen", frozenset(int(i) for i in self.frozen))
        if not layers:
            raise ValueError("network needs at least one layer")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        width = self.input_dim
        for k, layer in enumerate(layers):
            if layer.in_dim != width:
                raise ValueError(f"layer {k} expects {layer.in_dim} inputs but receives {width}")
            width = layer.out_dim
        if width != 1:
            raise ValueError(f"final layer must have a single output, has {width}")
        if layers[-1].activation is not Activation.SIGMOID:
            raise ValueError("final layer activation must be sigmoid")
        bad = [i for i in self.frozen if not 0 <= i < self.n_params]
        if bad:
            raise ValueError(f"frozen indices out of range: {sorted(bad)}")

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.input_dim == other.input_dim
            and self.level == other.level
            and self.frozen == other.frozen
            and self.layers == other.layers
        )

    def __repr__(self) -> str:
        shape = "→".join([str(self.input_dim)] + [str(l.out_dim) for l in self.layers])
        acts = ",".join(l.activation.value for l in self.layers)
        return f"Network({shape}, activations=[{acts}], level={self.level})"

    # -- evaluation -----------------------------------------------------

    def forward(self, x) -> float | np.ndarray:
        return forward(self, x)

    def classify(self, x) -> int | np.ndarray:
        return classify(self, x)

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "input_dim": self.input_dim,
            "level": self.level,
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "biases": layer.biases.tolist(),
                    "activation": layer.activation.value,
                }
                for layer in self.layers
            ],
        }
        if self.frozen:
            doc["frozen"] = sorted(self.frozen)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        try:
            layers = [
                Layer(l["weights"], l["biases"], Activation(l.get("activation", "linear")))
                for l in doc["layers"]
            ]
            return cls(
                layers=tuple(layers),
                input_dim=int(doc["input_dim"]),
                level=float(doc.get("level", 0.5)),
                frozen=frozenset(doc.get("frozen", ())),
            )
        except KeyError as exc:
            raise ValueError(f"network document is missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Network":
        # json parses decimals with float(), which round-trips 17 significant digits
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat parameter vector: layer-major, weights (row-major) then biases."""

    values: np.ndarray
    index_map: tuple[tuple[int, str, int, int], ...]
    frozen: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 1))
        if len(self.index_map) != self.values.size:
            raise ValueError("index_map length must match the number of values")

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return np.array_equal(self.values, other.values) and self.index_map == other.index_map

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=float), self.index_map, self.frozen)

    @property
    def names(self) -> list[str]:
        return [f"p{i}" for i in range(len(self))]


def _as_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, network expects {net.input_dim} features")
    return x


def forward(net: Network, x) -> float | np.ndarray:
    """Scalar confidence f(x) in [0, 1]; a 2-d ``x`` evaluates row-wise."""
    a = _as_input(net, x)
    for layer in net.layers:
        a = layer.activation(a @ layer.weights.T + layer.biases)
    out = a[..., 0]
    return float(out) if out.ndim == 0 else out


def classify(net: Network, x) -> int | np.ndarray:
    """Label 1 iff confidence >= level (ties go to label 1)."""
    conf = forward(net, x)
    if isinstance(conf, float):
        return int(conf >= net.level)
    return (conf >= net.level).astype(int)


def index_map(net: Network) -> tuple[tuple[int, str, int, int], ...]:
    entries = []
    for k, layer in enumerate(net.layers):
        rows, cols = layer.weights.shape
        entries.extend((k, "w", r, c) for r in range(rows) for c in range(cols))
        entries.extend((k, "b", r, 0) for r in range(rows))
    return tuple(entries)


def flatten(net: Network) -> ParamVector:
    values = np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in net.layers])
    return ParamVector(values, index_map(net), net.frozen)


def unflatten(arch: Network, pv) -> Network:
    values = pv.values if isinstance(pv, ParamVector) else np.asarray(pv, dtype=float)
    if values.shape != (arch.n_params,):
        raise ValueError(f"parameter vector has length {values.size}, architecture needs {arch.n_params}")
    layers = []
    pos = 0
    for layer in arch.layers:
        nw = layer.weights.size
        w = values[pos:pos + nw].reshape(layer.weights.shape)
        b = values[pos + nw:pos + nw + layer.out_dim]
        pos += nw + layer.out_dim
        layers.append(Layer(w, b, layer.activation))
    return Network(tuple(layers), arch.input_dim, arch.level, arch.frozen)


def perturb_box(p0: ParamVector, delta: float, frozen: Sequence[int] | None = None) -> Box:
    """Componentwise (infinity-norm) ball of radius ``delta`` around ``p0``.

    Frozen coordinates (from ``p0`` or the explicit argument) keep radius 0.
    """
    if not delta >= 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    values = p0.values if isinstance(p0, ParamVector) else np.asarray(p0, dtype=float)
    radius = np.full(values.shape, float(delta))
    fixed = set(frozen or ()) | set(getattr(p0, "frozen", ()))
    if fixed:
        radius[sorted(fixed)] = 0.0
    names = [f"p{i}" for i in range(values.size)]
    return Box(values - radius, values + radius, names)


def interval_forward(net: Network, param_box: Box, input_box: Box) -> Interval:
    """Enclosure of {f_p(x) : p in param_box, x in input_box}, within [0, 1]."""
    if len(param_box) != net.n_params:
        raise ValueError(f"parameter box has {len(param_box)} dims, network has {net.n_params} parameters")
    if len(input_box) != net.input_dim:
        raise ValueError(f"input box has {len(input_box)} dims, network expects {net.input_dim}")
    alo, ahi = np.array(input_box.lo), np.array(input_box.hi)
    pos = 0
    for layer in net.layers:
        nw = layer.weights.size
        wlo = param_box.lo[pos:pos + nw].reshape(layer.weights.shape)
        whi = param_box.hi[pos:pos + nw].reshape(layer.weights.shape)
        blo = param_box.lo[pos + nw:pos + nw + layer.out_dim]
        bhi = param_box.hi[pos + nw:pos + nw + layer.out_dim]
        pos += nw + layer.out_dim
        tlo, thi = iv.mul(wlo, whi, alo[None, :], ahi[None, :])
        slo, shi = iv.sum_outward(tlo, thi, axis=1)
        zlo, zhi = iv.add(slo, shi, blo, bhi)
        alo, ahi = layer.activation.on_interval(zlo, zhi)
    return Interval(float(np.clip(alo[0], 0.0, 1.0)), float(np.clip(ahi[0], 0.0, 1.0)))
