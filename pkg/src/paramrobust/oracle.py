"""Brute-force reference values by sampling.

Everything here is a *lower* bound on the quantity the optimizer certifies
from above: sampled parameters and grid inputs can only under-report the
worst case.  Parameter samples always include the box vertices (or a random
subset when there are too many), since one-hidden-layer networks with
monotone activations attain their extremes over a parameter box there.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .encoder import QueryKind, RobustnessQuery
from .expr import Formula
from .interval import Box
from .network import Network, ParamVector, flatten, perturb_box
from .solver import CompiledFormula

MAX_VERTICES = 8192


def _p0(net: Network, p0) -> ParamVector:
    if p0 is None:
        return flatten(net)
    if isinstance(p0, ParamVector):
        return p0
    return flatten(net).with_values(p0)


def _layer_slices(net: Network):
    pos = 0
    for layer in net.layers:
        nw = layer.weights.size
        yield layer, slice(pos, pos + nw), slice(pos + nw, pos + nw + layer.out_dim)
        pos += nw + layer.out_dim


def batch_forward(net: Network, P: np.ndarray, X: np.ndarray, pre_activation: bool = False) -> np.ndarray:
    """Confidences for every (parameter row, input row) pair, shape (m, k).

    With ``pre_activation`` the output layer's activation is skipped.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    last = len(net.layers) - 1
    units = None  # per-unit (m, k) activations of the previous layer
    for k, (layer, ws, bs) in enumerate(_layer_slices(net)):
        W = P[:, ws].reshape((P.shape[0],) + layer.weights.shape)
        B = P[:, bs]
        out = []
        for o in range(layer.out_dim):
            if units is None:
                z = W[:, o, :] @ X.T
            else:
                z = W[:, o, 0, None] * units[0]
                for j in range(1, len(units)):
                    z += W[:, o, j, None] * units[j]
            z += B[:, o, None]
            out.append(z if (k == last and pre_activation) else layer.activation(z))
        units = out
    return units[0]


def paired_forward(net: Network, P: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Confidence of row ``i`` of ``P`` at row ``i`` of ``X``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    a = np.atleast_2d(np.asarray(X, dtype=float))
    m = P.shape[0]
    for layer, ws, bs in _layer_slices(net):
        W = P[:, ws].reshape((m,) + layer.weights.shape)
        a = layer.activation(np.einsum("md,mod->mo", a, W) + P[:, bs])
    return a[:, 0]


def param_samples(box: Box, n: int, rng: np.random.Generator, max_vertices: int = MAX_VERTICES) -> np.ndarray:
    """Centre, vertices (all, or ``max_vertices`` random ones) and uniform draws."""
    lo, hi = box.lo, box.hi
    free = np.flatnonzero(hi > lo)
    centre = 0.5 * (lo + hi)
    if free.size <= np.log2(max_vertices):
        bits = np.array(list(itertools.product((0, 1), repeat=free.size)), dtype=bool).reshape(2 ** free.size, free.size)
    else:
        bits = rng.random((max_vertices, free.size)) < 0.5
    verts = np.tile(centre, (bits.shape[0], 1))
    verts[:, free] = np.where(bits, hi[free], lo[free])
    draws = box.sample(rng, max(0, n))
    return np.vstack([centre[None, :], verts, draws])


def input_grid(domain: Box, points: int) -> np.ndarray:
    """Regular grid with about ``points`` nodes (endpoints included)."""
    d = len(domain)
    per = max(2, int(round(points ** (1.0 / d))))
    axes = [np.linspace(a, b, per) if b > a else np.array([a]) for a, b in zip(domain.lo, domain.hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def conf_extremes(net: Network, P: np.ndarray, X: np.ndarray, chunk: int = 2_000_000):
    """Min and max confidence over the rows of ``P`` at every row of ``X``."""
    rows = max(1, chunk // max(1, X.shape[0]))
    zmin = np.full(X.shape[0], np.inf)
    zmax = np.full(X.shape[0], -np.inf)
    for s in range(0, P.shape[0], rows):
        z = batch_forward(net, P[s:s + rows], X, pre_activation=True)
        zmin = np.minimum(zmin, z.min(axis=0))
        zmax = np.maximum(zmax, z.max(axis=0))
    # the output activation is monotone, so it commutes with min/max
    out = net.layers[-1].activation
    return out(zmin), out(zmax)


# -- local and global estimates --------------------------------------------


def grid_eps(net: Network, p0, x0, delta: float, resolution: int = 101,
             max_points: int = 200_000, seed: int = 0) -> float:
    """Largest sampled |f_p0(x0) - f_p(x0)|; a lower bound on local eps*.

    Uses the full ``resolution``-per-axis grid over the free parameters when
    it has at most ``max_points`` nodes, otherwise vertices plus draws.
    """
    if not delta >= 0:
        raise ValueError("delta must be nonnegative")
    pv = _p0(net, p0)
    box = perturb_box(pv, delta, frozen=net.frozen)
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    free = np.flatnonzero(box.hi > box.lo)
    if free.size == 0:
        return 0.0
    if resolution ** free.size <= max_points:
        axes = [np.linspace(box.lo[i], box.hi[i], resolution) for i in free]
        P = np.tile(pv.values, (resolution ** free.size, 1))
        P[:, free] = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, free.size)
    else:
        P = param_samples(box, max_points, np.random.default_rng(seed))
    c = float(paired_forward(net, pv.values[None, :], x0)[0])
    fmin, fmax = conf_extremes(net, P, x0)
    return float(max(c - fmin[0], fmax[0] - c, 0.0))


@dataclass(frozen=True)
class OracleResult:
    value: float
    x: np.ndarray | None
    param_samples: int
    input_points: int


def _sigma_score(f0, fmin, fmax, level, side):
    above = np.where((f0 >= level) & (fmin < level), f0 - level, -np.inf)
    below = np.where((f0 < level) & (fmax >= level), level - f0, -np.inf)
    if side == "above":
        return above
    if side == "below":
        return below
    return np.maximum(above, below)


def _global_oracle(net, p0, domain, delta, score, n_samples, input_points, zoom, keep, seed) -> OracleResult:
    pv = _p0(net, p0)
    rng = np.random.default_rng(seed)
    P = param_samples(perturb_box(pv, delta, frozen=net.frozen), n_samples, rng)
    X = input_grid(domain, input_points)
    per = max(2, int(round(input_points ** (1.0 / len(domain)))))
    cell = (domain.hi - domain.lo) / (per - 1)
    best_val, best_x, total = -np.inf, None, X.shape[0]
    for _ in range(zoom + 1):
        f0 = paired_forward(net, np.broadcast_to(pv.values, (X.shape[0], pv.values.size)), X)
        fmin, fmax = conf_extremes(net, P, X)
        s = score(f0, fmin, fmax)
        i = int(np.argmax(s))
        if s[i] > best_val:
            best_val, best_x = float(s[i]), X[i].copy()
        # refine around the best few cells on a finer local grid
        top = np.argsort(-s)[:keep]
        top = top[np.isfinite(s[top])]
        if top.size == 0:
            break
        local = []
        for t in top:
            sub = Box(np.maximum(X[t] - cell, domain.lo), np.minimum(X[t] + cell, domain.hi))
            local.append(input_grid(sub, 21 ** len(domain)))
        X = np.unique(np.vstack(local), axis=0)
        total += X.shape[0]
        cell = cell / 10.0
    value = max(best_val, 0.0)
    return OracleResult(value, best_x if best_val > -np.inf else None, P.shape[0], total)


def oracle_eps_global(net: Network, p0, domain: Box, delta: float, n_samples: int = 100_000,
                      input_points: int = 10_000, zoom: int = 2, keep: int = 8, seed: int = 0) -> OracleResult:
    """Sampled lower bound on global eps* over ``domain``."""

    def score(f0, fmin, fmax):
        return np.maximum(f0 - fmin, fmax - f0)

    return _global_oracle(net, p0, domain, delta, score, n_samples, input_points, zoom, keep, seed)


def oracle_sigma(net: Network, p0, domain: Box, delta: float, side: str = "both", n_samples: int = 100_000,
                 input_points: int = 10_000, zoom: int = 2, keep: int = 8, seed: int = 0) -> OracleResult:
    """Sampled lower bound on sigma*: the largest margin of a flippable input."""

    def score(f0, fmin, fmax):
        return _sigma_score(f0, fmin, fmax, net.level, side)

    return _global_oracle(net, p0, domain, delta, score, n_samples, input_points, zoom, keep, seed)


# -- formulas --------------------------------------------------------------


def _finite_domain(box: Box, cap: float) -> Box:
    return Box(np.clip(box.lo, -cap, cap), np.clip(box.hi, -cap, cap), box.names)


def falsify(f: Formula, samples: int = 100_000, seed: int = 0, slack: float = 0.0,
            eq_slack: float | None = None, batch: int = 20_000, cap: float = 1e6) -> np.ndarray | None:
    """First of ``samples`` uniform draws satisfying ``f`` (relaxed by the slacks), if any."""
    cf = CompiledFormula(f)
    box = _finite_domain(f.domain, cap)
    rng = np.random.default_rng(seed)
    left = samples
    while left > 0:
        pts = box.sample(rng, min(batch, left))
        left -= pts.shape[0]
        ok = cf.check_points(pts, slack, eq_slack)
        if np.any(ok):
            return pts[int(np.argmax(ok))].copy()
    return None


def definition_violated(q: RobustnessQuery, P: np.ndarray, X: np.ndarray | None = None) -> np.ndarray:
    """Whether each sampled (p, x) pair breaks the robustness definition.

    Evaluated straight from the network, independently of the formula
    encoding; ``X`` is ignored for local queries (``x0`` is used).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if q.kind.is_local:
        X = np.broadcast_to(q.x0, (P.shape[0], q.x0.size))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    box = q.params_domain()
    inside = np.all((P >= box.lo) & (P <= box.hi), axis=1)
    if not q.kind.is_local:
        inside &= np.all((X >= q.domain.lo) & (X <= q.domain.hi), axis=1)
    f0 = paired_forward(q.net, np.broadcast_to(q.p0.values, P.shape), X)
    f = paired_forward(q.net, P, X)
    level = q.level
    if q.kind in (QueryKind.LOCAL_EPS, QueryKind.GLOBAL_EPS):
        bad = np.abs(f0 - f) > q.epsilon
    else:
        bad = (f0 >= level) != (f >= level)
        if q.kind is QueryKind.SIGMA_FLIP:
            bad &= np.abs(f0 - level) >= q.sigma
    return inside & bad
