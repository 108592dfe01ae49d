"""Per-input robustness scans over random points of a domain.

Each sampled input gets its reference confidence, label and margin, an
enclosure of the local confidence change, and a flippability verdict from
the solver.  Results are ordered by sample index whatever the worker count.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .encoder import QueryKind, RobustnessQuery, encode_local_flip
from .interval import Box
from .network import Network, ParamVector, flatten, forward, interval_forward, perturb_box, unflatten
from .optimizer import DEFAULT_TOLERANCE, estimate_eps_local
from .oracle import grid_eps
from .solver import DeltaSat, SolverConfig, Unsat, decide

MODES = ("auto", "fast", "certified")
CERTIFIED_AUTO_LIMIT = 100


@dataclass(frozen=True)
class ScanRecord:
    index: int
    x: np.ndarray
    confidence: float
    label: int
    margin: float
    eps_lower: float
    eps_upper: float
    flippable: bool | None
    status: str

    @property
    def eps_est(self) -> float:
        return self.eps_lower


def _scan_point(args) -> ScanRecord:
    index, net, p0, x, delta, certified, config, tolerance, resolution = args
    conf = float(forward(unflatten(net, p0), x))
    label = int(conf >= net.level)
    margin = abs(conf - net.level)
    pbox = perturb_box(p0, delta, frozen=net.frozen)
    enc = interval_forward(net, pbox, Box.point(x))
    if certified:
        est = estimate_eps_local(net, p0, x, delta, tolerance=tolerance)
        eps_lower, eps_upper = est.lower, est.upper
    else:
        eps_lower = grid_eps(net, p0, x, delta, resolution=resolution)
        eps_upper = max(conf - enc.lo, enc.hi - conf, eps_lower)
    # a perturbed confidence that cannot cross the level settles it at once
    if (label == 1 and enc.lo >= net.level) or (label == 0 and enc.hi < net.level):
        flippable, status = False, "unsat"
    else:
        q = RobustnessQuery(QueryKind.LOCAL_FLIP, net, delta, p0=p0, x0=x)
        verdict = decide(encode_local_flip(q), config)
        flippable = True if isinstance(verdict, DeltaSat) else False if isinstance(verdict, Unsat) else None
        status = str(verdict)
    return ScanRecord(index, x, conf, label, margin, float(eps_lower), float(eps_upper), flippable, status)


def scan_inputs(net: Network, p0, domain: Box, delta: float, n: int, seed: int = 0, mode: str = "auto",
                config: SolverConfig | None = None, tolerance: float = DEFAULT_TOLERANCE,
                workers: int = 1, resolution: int = 11) -> list[ScanRecord]:
    """Scan ``n`` inputs drawn uniformly from ``domain`` with a seeded generator.

    ``mode="certified"`` encloses each local eps* with the optimizer;
    ``"fast"`` pairs a parameter-grid lower bound with an interval upper
    bound.  ``"auto"`` is certified for ``n <= 100`` and fast beyond.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if len(domain) != net.input_dim or not domain.is_finite:
        raise ValueError("domain must be a finite box over the network inputs")
    certified = mode == "certified" or (mode == "auto" and n <= CERTIFIED_AUTO_LIMIT)
    config = config or SolverConfig()
    if p0 is None:
        p0 = flatten(net)
    elif not isinstance(p0, ParamVector):
        p0 = flatten(net).with_values(p0)
    X = domain.sample(np.random.default_rng(seed), n)
    jobs = [(i, net, p0, X[i], delta, certified, config, tolerance, resolution) for i in range(n)]
    if workers <= 1:
        return [_scan_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_scan_point, jobs, chunksize=max(1, n // (4 * workers))))


SCAN_FIELDS = ("confidence", "label", "margin", "eps_lower", "eps_upper", "flippable")


def _num(v: float) -> str:
    return repr(float(v))


def write_scan_csv(records: list[ScanRecord], fh) -> None:
    d = records[0].x.size if records else 0
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", *[f"x{i + 1}" for i in range(d)], *SCAN_FIELDS])
    for r in records:
        flag = "unknown" if r.flippable is None else str(int(r.flippable))
        w.writerow([r.index, *map(_num, r.x), _num(r.confidence), r.label, _num(r.margin),
                    _num(r.eps_lower), _num(r.eps_upper), flag])


def scan_csv(records: list[ScanRecord]) -> str:
    buf = io.StringIO()
    write_scan_csv(records, buf)
    return buf.getvalue()
