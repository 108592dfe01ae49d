"""Fixed-point quantization of parameters and the safe bit-width search.

Rounding to ``f`` fractional bits moves each parameter by at most half a
grid step, ``2**-(f+1)``.  A robustness query at that radius therefore
covers every rounding outcome at once; the exact quantized point is
checked as well because the box certificate is conservative.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .encoder import QueryKind, RobustnessQuery, encode
from .interval import Box
from .network import Network, ParamVector, flatten
from .solver import DeltaSat, SolverConfig, Unsat, Verdict, decide

logger = logging.getLogger(__name__)

MAX_FRAC_BITS = 52


@dataclass(frozen=True)
class QuantScheme:
    """Uniform fixed point with ``frac_bits`` fractional bits, ties to even."""

    frac_bits: int

    def __post_init__(self):
        if int(self.frac_bits) != self.frac_bits or self.frac_bits < 0:
            raise ValueError(f"frac_bits must be a nonnegative integer, got {self.frac_bits!r}")
        object.__setattr__(self, "frac_bits", int(self.frac_bits))

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    def on_grid(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float) / self.step
        return v == np.round(v)

    @classmethod
    def from_dict(cls, doc: dict) -> "QuantScheme":
        return cls(doc["frac_bits"])

    def to_dict(self) -> dict:
        return {"frac_bits": self.frac_bits}


@dataclass(frozen=True)
class QuantReport:
    quantized: ParamVector
    errors: np.ndarray
    max_error: float
    delta_bound: float

    def to_dict(self) -> dict:
        return {
            "quantized": self.quantized.values.tolist(),
            "errors": self.errors.tolist(),
            "max_error": self.max_error,
            "delta_bound": self.delta_bound,
        }


def derive_delta(scheme: QuantScheme) -> float:
    return 2.0 ** -(scheme.frac_bits + 1)


def quantize(p0: ParamVector, scheme: QuantScheme) -> QuantReport:
    """Round every non-frozen entry to the nearest grid point."""
    values = np.asarray(p0.values, dtype=float)
    # scaling by a power of two is exact, so np.round sees the true ties
    q = np.round(values * 2.0 ** scheme.frac_bits) * scheme.step
    if p0.frozen:
        q[list(p0.frozen)] = values[list(p0.frozen)]
    errors = np.abs(q - values)
    return QuantReport(p0.with_values(q), errors, float(errors.max(initial=0.0)), derive_delta(scheme))


@dataclass(frozen=True)
class QuantVerification:
    scheme: QuantScheme
    report: QuantReport
    box_verdict: Verdict
    point_verdict: Verdict

    @property
    def verified(self) -> bool:
        return isinstance(self.box_verdict, Unsat)

    def to_dict(self) -> dict:
        def verdict(v):
            doc = {"verdict": str(v)}
            if isinstance(v, DeltaSat):
                doc["witness"] = v.assignment()
            return doc

        return {
            "scheme": self.scheme.to_dict(),
            "delta": derive_delta(self.scheme),
            "report": self.report.to_dict(),
            "box": verdict(self.box_verdict),
            "point": verdict(self.point_verdict),
        }


def verify_quantized(net: Network, scheme: QuantScheme, template: RobustnessQuery,
                     config: SolverConfig | None = None) -> QuantVerification:
    """Box query at the half-ulp radius plus the query at the rounded point.

    ``template`` supplies everything but the radius; its ``delta`` is
    ignored.  The reference confidence stays at the unrounded parameters.
    """
    config = config or SolverConfig()
    p0 = template.p0 if template.p0 is not None else flatten(net)
    report = quantize(p0, scheme)
    box_q = template.replace(delta=derive_delta(scheme), param_box=None)
    box_verdict = decide(encode(box_q), config)
    q = report.quantized.values
    point_q = template.replace(delta=0.0, param_box=Box.point(q, p0.names))
    point_verdict = decide(encode(point_q), config)
    return QuantVerification(scheme, report, box_verdict, point_verdict)


@dataclass(frozen=True)
class SafeBits:
    """Outcome of the bit-width search; ``frac_bits`` is None when not found."""

    frac_bits: int | None
    verdict: Verdict | None
    previous: Verdict | None
    checked: dict[int, str]

    @property
    def found(self) -> bool:
        return self.frac_bits is not None

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "frac_bits": self.frac_bits,
            "delta": derive_delta(QuantScheme(self.frac_bits)) if self.found else None,
            "verdict": str(self.verdict) if self.verdict is not None else None,
            "previous_verdict": str(self.previous) if self.previous is not None else None,
            "checked": {str(k): v for k, v in sorted(self.checked.items())},
        }


def target_query(net: Network, domain: Box, target: float, kind: str = "eps", p0=None) -> RobustnessQuery:
    """GlobalEps at threshold ``target`` (``kind="eps"``) or SigmaFlip at ``target``."""
    if kind == "eps":
        return RobustnessQuery(QueryKind.GLOBAL_EPS, net, 0.0, p0=p0, epsilon=target, domain=domain)
    if kind == "sigma":
        return RobustnessQuery(QueryKind.SIGMA_FLIP, net, 0.0, p0=p0, sigma=target, domain=domain)
    raise ValueError(f"kind must be 'eps' or 'sigma', got {kind!r}")


def safe_bits_search(net: Network, domain: Box, target: float, config: SolverConfig | None = None,
                     kind: str = "eps", p0=None, max_bits: int = MAX_FRAC_BITS) -> SafeBits:
    """Smallest ``f`` whose half-ulp box query verifies against ``target``.

    Verification only gets easier as ``f`` grows, so a binary search over
    ``0..max_bits`` suffices.  Unknown counts as not verified.
    """
    config = config or SolverConfig()
    template = target_query(net, domain, target, kind, p0)
    verdicts: dict[int, Verdict] = {}

    def run(f: int) -> Verdict:
        if f not in verdicts:
            q = template.replace(delta=derive_delta(QuantScheme(f)))
            verdicts[f] = decide(encode(q), config)
            logger.info("frac_bits=%d: %s", f, verdicts[f])
        return verdicts[f]

    checked = lambda: {k: str(v) for k, v in verdicts.items()}  # noqa: E731
    if not isinstance(run(max_bits), Unsat):
        return SafeBits(None, None, None, checked())
    lo, hi = -1, max_bits  # run(lo) fails (or lo = -1), run(hi) verifies
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if isinstance(run(mid), Unsat):
            hi = mid
        else:
            lo = mid
    prev = run(hi - 1) if hi > 0 else None
    return SafeBits(hi, verdicts[hi], prev, checked())
