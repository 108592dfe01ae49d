"""Certified global minimisation by interval branch-and-bound.

``minimize`` returns an enclosure ``lower <= min <= upper``: the lower bound
comes from contracted boxes that were never refuted, the upper bound from a
witness that satisfies every inequality exactly and every equality within
the solver precision.
"""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .encoder import OptProblem, opt_global_eps, opt_local_eps, opt_sigma
from .interval import Box
from .network import Network
from .solver import CompiledFormula, SolverConfig

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class OptResult:
    lower: float
    upper: float
    witness: np.ndarray | None
    splits_used: int
    names: tuple[str, ...] = ()
    converged: bool = True

    @property
    def infeasible(self) -> bool:
        return self.witness is None and self.lower == math.inf

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def assignment(self) -> dict[str, float] | None:
        if self.witness is None:
            return None
        return dict(zip(self.names, np.asarray(self.witness).tolist()))


def estimation_config(**overrides) -> SolverConfig:
    """Defaults tuned for the estimation problems (smear branching)."""
    base = dict(branching="smear")
    base.update(overrides)
    return SolverConfig(**base)


def minimize(problem: OptProblem, config: SolverConfig | None = None,
             tolerance: float = DEFAULT_TOLERANCE, time_limit: float | None = None,
             cutoff: float | None = None) -> OptResult:
    """Best-first branch-and-bound on batches of boxes.

    Stops when ``upper - lower <= tolerance``, when the split budget is spent,
    or after ``time_limit`` seconds; the last two report ``converged=False``
    with bounds that still bracket the optimum.

    ``cutoff`` is a known bound the caller does not need to beat: boxes whose
    bound is within tolerance of it are not refined, witness or not.
    """
    config = config or SolverConfig()
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    cf = CompiledFormula(problem.constraints, objective=problem.objective)
    names = tuple(cf.names)
    dom = cf.domain
    start = time.monotonic()

    upper = math.inf
    witness = None
    splits = 0
    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = [(-math.inf, 0, dom.lo.copy(), dom.hi.copy())]
    converged = True
    stuck: list[float] = []

    cap = math.inf if cutoff is None else float(cutoff)
    while heap:
        lower = heap[0][0]
        if min(upper, cap) - lower <= tolerance:
            break
        if splits >= config.max_splits or (time_limit is not None and time.monotonic() - start > time_limit):
            converged = False
            break
        batch = []
        while heap and len(batch) < config.batch_size:
            batch.append(heapq.heappop(heap))
        lo = np.array([b[2] for b in batch])
        hi = np.array([b[3] for b in batch])
        bound = min(upper, cap)
        cut = np.full(lo.shape[0], bound) if math.isfinite(bound) else None
        lo, hi, empty = cf.contract(lo, hi, cut=cut, rounds=config.contraction_rounds)
        lo, hi = lo[~empty], hi[~empty]
        if lo.shape[0] == 0:
            continue
        olo, _ = cf.objective_bounds(lo, hi)
        parent = np.array([b[0] for b in batch])[~empty]
        olo = np.maximum(olo, parent)

        for pts in cf.probe_points(lo, hi):
            ok = cf.check_points(pts, 0.0, eq_slack=config.precision)
            if np.any(ok):
                vals = cf.objective.eval_points(pts[ok])[0]
                i = int(np.argmin(vals))
                if vals[i] < upper:
                    upper = float(vals[i])
                    witness = pts[ok][i].copy()

        bound = min(upper, cap)
        keep = olo <= bound
        lo, hi, olo = lo[keep], hi[keep], olo[keep]
        if lo.shape[0] == 0:
            continue
        # boxes already within tolerance of the incumbent need no split
        done = olo >= bound - tolerance
        for i in np.flatnonzero(done):
            counter += 1
            heapq.heappush(heap, (float(olo[i]), counter, lo[i], hi[i]))
        lo, hi, olo = lo[~done], hi[~done], olo[~done]
        if lo.shape[0] == 0:
            continue
        dims = cf.branch_dims(lo, hi, config.branching)
        rows = np.arange(lo.shape[0])
        mid = 0.5 * (lo[rows, dims] + hi[rows, dims])
        splittable = (mid > lo[rows, dims]) & (mid < hi[rows, dims])
        for i in range(lo.shape[0]):
            counter += 1
            if not splittable[i]:
                # float resolution reached: keep its bound, stop refining it
                stuck.append(float(olo[i]))
                continue
            left_hi = hi[i].copy()
            left_hi[dims[i]] = mid[i]
            right_lo = lo[i].copy()
            right_lo[dims[i]] = mid[i]
            heapq.heappush(heap, (float(olo[i]), counter, lo[i], left_hi))
            counter += 1
            heapq.heappush(heap, (float(olo[i]), counter, right_lo, hi[i]))
            splits += 1

    pending = ([heap[0][0]] if heap else []) + [b for b in stuck if b <= min(upper, cap)]
    lower = min(pending + [upper])
    if witness is None and not pending:
        return OptResult(math.inf, math.inf, None, splits, names, True)
    converged = converged and min(upper, cap) - lower <= tolerance
    if not converged:
        logger.info("minimize stopped with gap %.3g after %d splits", upper - lower, splits)
    return OptResult(float(lower), float(upper), witness, splits, names, converged)


@dataclass(frozen=True)
class Estimate:
    """Certified enclosure of a maximised quantity (eps* or sigma*)."""

    lower: float
    upper: float
    witness: dict[str, float] | None
    splits_used: int
    converged: bool

    def __iter__(self):
        yield self.lower
        yield self.upper

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "witness": self.witness,
            "splits_used": self.splits_used,
            "converged": self.converged,
        }


def _estimate(problem: OptProblem, config, tolerance, time_limit) -> Estimate:
    config = config or estimation_config()
    # the quantity is 0 by convention when nothing is feasible, so the
    # search never needs to certify anything below 0
    res = minimize(problem, config, tolerance, time_limit, cutoff=0.0)
    if res.infeasible:
        return Estimate(0.0, 0.0, None, res.splits_used, True)
    lower = max(0.0, -res.upper)
    upper = max(min(problem.objective_range.hi, -res.lower), lower)
    return Estimate(lower, upper, res.assignment(), res.splits_used, res.converged or upper - lower <= tolerance)


def estimate_eps_local(net: Network, p0, x0, delta: float, config: SolverConfig | None = None,
                       tolerance: float = DEFAULT_TOLERANCE, eps_max: float = 1.0,
                       time_limit: float | None = None) -> Estimate:
    return _estimate(opt_local_eps(net, p0, x0, delta, eps_max), config, tolerance, time_limit)


def estimate_eps_global(net: Network, p0, domain: Box, delta: float, config: SolverConfig | None = None,
                        tolerance: float = DEFAULT_TOLERANCE, eps_max: float = 1.0,
                        time_limit: float | None = None) -> Estimate:
    return _estimate(opt_global_eps(net, p0, domain, delta, eps_max), config, tolerance, time_limit)


def estimate_sigma(net: Network, p0, domain: Box, delta: float, side: str = "both",
                   config: SolverConfig | None = None, tolerance: float = DEFAULT_TOLERANCE,
                   sigma_max: float | None = None, time_limit: float | None = None) -> Estimate:
    return _estimate(opt_sigma(net, p0, domain, delta, sigma_max, side), config, tolerance, time_limit)
