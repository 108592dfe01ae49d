"""Bundled models and the cats dataset.

``cat`` is the one-node logistic model ``sig(c0 + c1*H + c2*W)`` for the
cats data (H = heart weight in g, W = body weight in kg, label 1 = male).
``mlp_relu`` / ``mlp_linear`` are 2-3-1 perceptrons with pinned weights on
standardised inputs.  ``toy_scaled`` is ``sig(w*x)`` and ``toy_shifted`` is
``sig(x + b)``; each freezes the coefficient that is not a parameter.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .interval import Box
from .network import Network

MODELS = ("cat", "mlp_relu", "mlp_linear", "toy_scaled", "toy_shifted")
BUILTIN_PREFIX = "builtin:"

# standardised inputs for the MLP fixtures
MLP_DOMAIN = Box([-2.0, -2.0], [2.0, 2.0], ["x0", "x1"])
TOY_DOMAIN = Box([-1.0], [1.0], ["x0"])


def data_path(name: str) -> Path:
    return Path(str(resources.files("paramrobust") / "data" / name))


def load_model(name: str) -> Network:
    if name not in MODELS:
        raise KeyError(f"unknown fixture model {name!r}; choose from {MODELS}")
    return Network.load(data_path(f"{name}.json"))


def cats_csv() -> Path:
    return data_path("cats.csv")


def resolve_model(ref: str) -> Network:
    """Load ``builtin:<name>`` fixtures or a JSON model path."""
    if ref.startswith(BUILTIN_PREFIX):
        return load_model(ref[len(BUILTIN_PREFIX):])
    return Network.load(ref)


def resolve_path(ref: str) -> Path:
    if ref == BUILTIN_PREFIX + "cats":
        return cats_csv()
    if ref.startswith(BUILTIN_PREFIX):
        return data_path(ref[len(BUILTIN_PREFIX):])
    return Path(ref)
