"""Delta-complete decision procedure: interval constraint propagation plus
branch-and-prune over batches of boxes.

Answers follow the dReal contract: ``Unsat`` is a proof that no point of the
variable domains satisfies the formula; ``DeltaSat`` carries a witness that
satisfies every atom relaxed by ``precision``; ``Unknown`` means the split
budget ran out first.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ._tape import Tape
from .expr import Const, Formula, Var, relation_holds
from .interval import Box

logger = logging.getLogger(__name__)

BRANCHING_RULES = ("widest", "smear")
WITNESS_MARGIN = 0.01


@dataclass(frozen=True)
class SolverConfig:
    """Search settings.  ``precision`` is the solver's numerical slack, not
    the parameter-perturbation radius."""

    precision: float = 1e-4
    max_splits: int = 1_000_000
    branching: str = "smear"
    deterministic: bool = True
    batch_size: int = 128
    contraction_rounds: int = 4

    def __post_init__(self):
        if not self.precision > 0:
            raise ValueError("precision must be positive")
        if self.max_splits < 1:
            raise ValueError("max_splits must be at least 1")
        if self.branching not in BRANCHING_RULES:
            raise ValueError(f"branching must be one of {BRANCHING_RULES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass(frozen=True)
class Unsat:
    splits: int = 0

    def __str__(self):
        return "unsat"


@dataclass(frozen=True)
class DeltaSat:
    witness: np.ndarray
    box: Box
    names: tuple[str, ...] = ()
    splits: int = 0

    def __str__(self):
        return "delta-sat"

    def assignment(self) -> dict[str, float]:
        return dict(zip(self.names, np.asarray(self.witness).tolist()))


@dataclass(frozen=True)
class Unknown:
    reason: str = "budget-exhausted"
    splits: int = 0

    def __str__(self):
        return "unknown"


Verdict = Union[Unsat, DeltaSat, Unknown]


# -- compiled formula ------------------------------------------------------


@dataclass
class _Atom:
    tape: Tape
    rel: str
    target: tuple[float, float]
    # point evaluation keeps lhs/rhs apart so comparisons are exact in float
    sides: Tape = field(repr=False, default=None)


def _target(rel: str, shift: float) -> tuple[float, float]:
    # closure of the relation on (expr - shift)
    if rel in ("<=", "<"):
        return -np.inf, shift
    if rel in (">=", ">"):
        return shift, np.inf
    return shift, shift


_FLIP = {"<=": ">=", "<": ">", ">=": "<=", ">": "<", "=": "="}


def _compile_atom(atom, names) -> _Atom:
    lhs, rel, rhs = atom.lhs, atom.rel, atom.rhs
    if isinstance(lhs, Const) and not isinstance(rhs, Const):
        lhs, rhs, rel = rhs, lhs, _FLIP[rel]
    if isinstance(rhs, Const):
        tape = Tape([lhs], names)
        target = _target(rel, rhs.value)
    else:
        tape = Tape([lhs - rhs], names)
        target = _target(rel, 0.0)
    return _Atom(tape, rel, target, Tape([atom.lhs, atom.rhs], names))


class CompiledFormula:
    """A formula lowered to tapes, with batched contraction and checking."""

    def __init__(self, formula: Formula, objective=None):
        self.formula = formula
        self.names = formula.names
        self.domain = formula.domain
        self.clauses = [[_compile_atom(a, self.names) for a in c] for c in formula.clauses]
        self.objective = Tape([objective], self.names) if objective is not None else None
        self.definitions, def_clauses = self._find_definitions(formula)
        self.defined = {i for i, _ in self.definitions}
        self._corner_moves = self._plan_corner_moves(def_clauses)

    def _find_definitions(self, formula):
        # single-atom equalities ``v = e`` with v absent from e let a probe
        # point assign v exactly instead of guessing its midpoint
        defs = []
        clauses = set()
        index = {n: i for i, n in enumerate(self.names)}
        for k, clause in enumerate(formula.clauses):
            if len(clause) != 1 or clause[0].rel != "=":
                continue
            a = clause[0]
            for v, e in ((a.lhs, a.rhs), (a.rhs, a.lhs)):
                if isinstance(v, Var) and v.name not in e.variables() and index[v.name] not in {i for i, _ in defs}:
                    defs.append((index[v.name], Tape([e], self.names)))
                    clauses.add(k)
                    break
        return defs, clauses

    def _plan_corner_moves(self, def_clauses):
        # each inequality atom may push the variables that no other hard
        # (single-atom, non-definitional) constraint mentions to a box corner
        hard = [
            (k, set(c[0].tape.used_vars))
            for k, c in enumerate(self.clauses)
            if len(c) == 1 and k not in def_clauses
        ]
        moves = []
        for k, clause in enumerate(self.clauses):
            if k in def_clauses:
                continue
            for atom in clause:
                if atom.rel == "=":
                    continue
                others = set().union(*(v for j, v in hard if j != k)) if hard else set()
                free = sorted(set(atom.tape.used_vars) - others - self.defined)
                if free:
                    moves.append((atom, np.array(free), atom.rel in ("<", "<=")))
        if self.objective is not None:
            constrained = set().union(*(v for _, v in hard)) if hard else set()
            free = sorted(set(range(len(self.names))) - constrained - self.defined)
            if free:
                moves.append((None, np.array(free), True))
        return moves

    def _point_gradient(self, tape, pts):
        L, H = tape.forward(pts, pts)
        GL, GH = tape.gradient(L, H)
        r = tape.roots[0]
        g = 0.5 * (GL[r] + GH[r])
        return np.where(np.isfinite(g), g, 0.0)

    def _objective_gradient(self, pts):
        # chain the objective through definitional equalities v = e(...)
        g = self._point_gradient(self.objective, pts)
        for i, tape in self.definitions:
            gi = g[:, i:i + 1]
            if np.any(gi != 0):
                g = g + gi * self._point_gradient(tape, pts)
                g[:, i] = 0.0
        return g

    def _resolve(self, pts, lo, hi):
        for i, tape in self.definitions:
            val = tape.eval_points(pts)[0]
            pts[:, i] = np.clip(np.where(np.isfinite(val), val, pts[:, i]), lo[:, i], hi[:, i])
        return pts

    # -- contraction --------------------------------------------------

    def _revise(self, atom: _Atom, lo, hi, tight: bool, cut_hi=None):
        L, H = atom.tape.tight_forward(lo, hi) if tight else atom.tape.forward(lo, hi)
        r = atom.tape.roots[0]
        tlo, thi = atom.target
        L[r] = np.maximum(L[r], tlo)
        H[r] = np.minimum(H[r], thi if cut_hi is None else np.minimum(thi, cut_hi))
        nlo, nhi, empty = atom.tape.backward(L, H, lo, hi)
        # refuted rows keep finite bounds so later passes stay NaN-free
        keep = empty[:, None]
        return np.where(keep, lo, nlo), np.where(keep, hi, nhi), empty

    def contract(self, lo, hi, cut=None, rounds: int = 4, tight: bool = True):
        """Narrow a batch of boxes without losing solutions.

        ``cut`` (per-box array) adds the constraint ``objective <= cut``.
        Returns ``(lo, hi, empty)``.
        """
        lo = np.array(lo, dtype=float)
        hi = np.array(hi, dtype=float)
        empty = np.zeros(lo.shape[0], dtype=bool)
        cut_atom = None
        if cut is not None and self.objective is not None:
            cut_atom = _Atom(self.objective, "<=", (-np.inf, np.inf))
        for rnd in range(rounds):
            width0 = hi - lo
            if cut_atom is not None:
                lo, hi, e = self._revise(cut_atom, lo, hi, tight, cut_hi=cut)
                empty |= e
            for clause in self.clauses:
                if len(clause) == 1:
                    lo, hi, e = self._revise(clause[0], lo, hi, tight)
                    empty |= e
                    continue
                hlo = np.full_like(lo, np.inf)
                hhi = np.full_like(hi, -np.inf)
                all_empty = np.ones(lo.shape[0], dtype=bool)
                for atom in clause:
                    alo, ahi, e = self._revise(atom, lo, hi, tight)
                    keep = ~e[:, None]
                    hlo = np.where(keep, np.minimum(hlo, alo), hlo)
                    hhi = np.where(keep, np.maximum(hhi, ahi), hhi)
                    all_empty &= e
                lo = np.where(all_empty[:, None], lo, np.maximum(lo, hlo))
                hi = np.where(all_empty[:, None], hi, np.minimum(hi, hhi))
                empty |= all_empty
            empty |= np.any(lo > hi, axis=1)
            lo = np.where(empty[:, None], hi, lo)
            shrink = np.where(width0 > 0, (width0 - (hi - lo)) / np.where(width0 > 0, width0, 1), 0.0)
            if rnd + 1 < rounds and not np.any(shrink[~empty] > 0.05):
                break
        return lo, hi, empty

    def objective_bounds(self, lo, hi):
        return self.objective.root_enclosure(lo, hi, tight=True)

    # -- branching ----------------------------------------------------

    def branch_dims(self, lo, hi, rule: str):
        width = hi - lo
        scale = self.domain.hi - self.domain.lo
        scaled = np.where(scale > 0, width / np.where(scale > 0, scale, 1.0), 0.0)
        if rule == "smear":
            impact = np.zeros_like(width)
            tapes = [a.tape for c in self.clauses for a in c]
            if self.objective is not None:
                tapes.append(self.objective)
            for tape in tapes:
                L, H = tape.forward(lo, hi)
                GL, GH = tape.gradient(L, H)
                r = tape.roots[0]
                impact += np.maximum(np.abs(GL[r]), np.abs(GH[r])) * width
            impact = np.where(np.isfinite(impact), impact, np.inf)
            score = np.where(width > 0, impact + 1e-12 * scaled, -1.0)
        else:
            score = np.where(width > 0, scaled, -1.0)
        if self.defined:
            free = [i for i in range(len(self.names)) if i not in self.defined]
            free_score = score[:, free]
            use_free = np.max(free_score, axis=1) > 0
            masked = score.copy()
            masked[:, sorted(self.defined)] = -1.0
            score = np.where(use_free[:, None], masked, score)
        # argmax returns the lowest index among ties
        return np.argmax(score, axis=1)

    # -- witnesses ----------------------------------------------------

    def probe_points(self, lo, hi) -> list[np.ndarray]:
        """Candidate witnesses per box: the midpoint, then corner probes
        that move an atom's own variables along its linearisation.

        Each corner is tried inset first: contraction tends to put box
        faces exactly on constraint boundaries, where witnesses are ties.
        """
        mid = self._resolve(np.clip(0.5 * (lo + hi), lo, hi), lo, hi)
        corners = []
        for atom, cols, decrease in self._corner_moves:
            if atom is None:
                g = self._objective_gradient(mid)
            else:
                g = self._point_gradient(atom.tape, mid)
            step = -g[:, cols] if decrease else g[:, cols]
            target = np.where(step > 0, hi[:, cols], np.where(step < 0, lo[:, cols], mid[:, cols]))
            corners.append((cols, target))
        probes = [mid]
        for frac in (0.75, 1.0):
            for cols, target in corners:
                pts = mid.copy()
                pts[:, cols] = mid[:, cols] + frac * (target - mid[:, cols]) if frac < 1 else target
                probes.append(self._resolve(np.clip(pts, lo, hi), lo, hi))
        return probes

    def check_points(self, pts, slack: float = 0.0, eq_slack: float | None = None):
        """Row-wise truth of the relaxed formula (domains included)."""
        eq_slack = slack if eq_slack is None else eq_slack
        dom = self.domain
        ok = np.all((pts >= dom.lo) & (pts <= dom.hi), axis=1)
        for clause in self.clauses:
            sat = np.zeros(pts.shape[0], dtype=bool)
            for atom in clause:
                lhs, rhs = atom.sides.eval_points(pts)
                with np.errstate(invalid="ignore"):
                    d = lhs - rhs
                s = eq_slack if atom.rel == "=" else slack
                sat |= relation_holds(atom.rel, d, s) & ~np.isnan(d)
            ok &= sat
        return ok


# -- public operations -----------------------------------------------------


def contract(f: Formula, box: Box | None = None, rounds: int = 8) -> Box | None:
    """HC4 contraction of ``box`` (default: the formula's domain).

    Returns a sub-box holding every solution inside ``box``, or ``None`` when
    the box provably contains none.
    """
    cf = CompiledFormula(f)
    box = f.domain if box is None else box
    if len(box) != len(cf.names):
        raise ValueError(f"box has {len(box)} dims, formula has {len(cf.names)} variables")
    lo, hi, empty = cf.contract(box.lo[None, :], box.hi[None, :], rounds=rounds)
    if empty[0]:
        return None
    return Box(lo[0], hi[0], cf.names)


def check_point(f: Formula, point, slack: float = 0.0) -> bool:
    """True iff every clause has an atom holding at ``point`` within ``slack``."""
    return f.holds(point, slack)


def decide(f: Formula, config: SolverConfig | None = None) -> Verdict:
    """Branch-and-prune decision of ``f`` over its variable domains."""
    config = config or SolverConfig()
    cf = CompiledFormula(f)
    dom = cf.domain
    stack_lo = [dom.lo.copy()]
    stack_hi = [dom.hi.copy()]
    splits = 0
    while stack_lo:
        take = min(config.batch_size, len(stack_lo))
        lo = np.array(stack_lo[-take:])
        hi = np.array(stack_hi[-take:])
        del stack_lo[-take:], stack_hi[-take:]
        # the stack pops its last entry first; keep that order within a batch
        lo, hi = lo[::-1], hi[::-1]
        lo, hi, empty = cf.contract(lo, hi, rounds=config.contraction_rounds)
        lo, hi = lo[~empty], hi[~empty]
        if lo.shape[0] == 0:
            continue
        # witnesses that clear every inequality by a small margin end the
        # search at once (probes otherwise land on ties, where contraction
        # leaves box faces); weaker ones wait until their box is this small
        small = np.all(hi - lo < config.precision, axis=1)
        for pts in cf.probe_points(lo, hi):
            ok = cf.check_points(pts, -WITNESS_MARGIN * config.precision, eq_slack=config.precision)
            if np.any(small):
                ok |= small & cf.check_points(pts, config.precision)
            if np.any(ok):
                i = int(np.argmax(ok))
                return DeltaSat(pts[i].copy(), Box(lo[i], hi[i], cf.names), tuple(cf.names), splits)
        if splits + lo.shape[0] > config.max_splits:
            logger.info("decide: split budget %d exhausted", config.max_splits)
            return Unknown("budget-exhausted", splits)
        dims = cf.branch_dims(lo, hi, config.branching)
        rows = np.arange(lo.shape[0])
        mid = 0.5 * (lo[rows, dims] + hi[rows, dims])
        if np.any((mid <= lo[rows, dims]) | (mid >= hi[rows, dims])):
            # a box at float resolution that neither refutes nor yields a witness
            return Unknown("float-resolution", splits)
        splits += lo.shape[0]
        left_hi = hi.copy()
        left_hi[rows, dims] = mid
        right_lo = lo.copy()
        right_lo[rows, dims] = mid
        # push in reverse so the first box's lower half is explored first
        for i in range(lo.shape[0] - 1, -1, -1):
            stack_lo.append(right_lo[i])
            stack_hi.append(hi[i])
            stack_lo.append(lo[i])
            stack_hi.append(left_hi[i])
    return Unsat(splits)
