"""Labelled CSV datasets: feature columns plus a binary label column."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .interval import Box
from .network import Network, classify


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPoints:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    label_name: str

    def __len__(self):
        return self.X.shape[0]


def load_dataset(path, features: Sequence[str] | None = None, label: str | None = None) -> LabeledPoints:
    """Read a headed CSV.  By default the last column is the label and the
    rest are features; ``features``/``label`` select columns by name."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        label = label or header[-1]
        features = list(features) if features is not None else [h for h in header if h != label]
        missing = [c for c in [*features, label] if c not in header]
        if missing:
            raise DatasetError(f"{path}:1: missing columns {missing}")
        cols = [header.index(c) for c in features]
        lcol = header.index(label)
        X, y = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                X.append([float(row[c]) for c in cols])
                lab = float(row[lcol])
            except ValueError as exc:
                raise DatasetError(f"{path}:{line}: {exc}") from None
            if lab not in (0.0, 1.0):
                raise DatasetError(f"{path}:{line}: label must be 0 or 1, got {row[lcol]!r}")
            y.append(int(lab))
    if not X:
        raise DatasetError(f"{path}: no data rows")
    return LabeledPoints(np.array(X), np.array(y, dtype=int), tuple(features), label)


def domain_from_dataset(points) -> Box:
    """Componentwise min/max bounding box of the feature rows."""
    X = points.X if isinstance(points, LabeledPoints) else np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("no points")
    return Box(X.min(axis=0), X.max(axis=0), [f"x{i}" for i in range(X.shape[1])])


def accuracy(net: Network, points: LabeledPoints) -> float:
    return float(np.mean(classify(net, points.X) == points.y))
