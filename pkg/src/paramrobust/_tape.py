"""Expression DAGs compiled to a flat instruction list for batched evaluation.

All passes work on a batch of ``N`` boxes at once: variable bounds are
``(N, nvars)`` arrays and every node enclosure is an ``(N,)`` pair.
"""
from __future__ import annotations

import numpy as np

from . import interval as iv
from .expr import Abs, Add, Const, Exp, Expr, Max, Mul, Neg, Sigmoid, Tanh, Var, postorder

VAR, CONST, ADD, MUL, NEG, ABS, MAX, EXP, SIG, TANH = range(10)
_OPCODE = {Add: ADD, Mul: MUL, Neg: NEG, Abs: ABS, Max: MAX, Exp: EXP, Sigmoid: SIG, Tanh: TANH}


class Tape:
    def __init__(self, roots: list[Expr], var_names):
        self.var_names = list(var_names)
        index = {n: i for i, n in enumerate(self.var_names)}
        self.nvars = len(self.var_names)
        slots: dict[int, int] = {}
        var_slots: dict[str, int] = {}
        code = []
        for node in postorder(roots):
            if isinstance(node, Var):
                if node.name not in index:
                    raise KeyError(f"variable {node.name!r} is not declared")
                if node.name in var_slots:
                    slots[id(node)] = var_slots[node.name]
                    continue
                var_slots[node.name] = slots[id(node)] = len(code)
                code.append((VAR, index[node.name], -1, 0.0))
            elif isinstance(node, Const):
                slots[id(node)] = len(code)
                code.append((CONST, -1, -1, node.value))
            else:
                kids = [slots[id(c)] for c in node.children]
                slots[id(node)] = len(code)
                code.append((_OPCODE[type(node)], kids[0], kids[1] if len(kids) > 1 else -1, 0.0))
        self.code = code
        self.roots = [slots[id(r)] for r in roots]
        self.used_vars = sorted(index[n] for n in var_slots)

    def __len__(self):
        return len(self.code)

    # -- point evaluation ---------------------------------------------

    def eval_points(self, pts: np.ndarray) -> list[np.ndarray]:
        """Float values of every root at each row of ``pts``."""
        n = pts.shape[0]
        val: list = [None] * len(self.code)
        with np.errstate(over="ignore", invalid="ignore"):
            for k, (op, a, b, c) in enumerate(self.code):
                if op == VAR:
                    val[k] = pts[:, a]
                elif op == CONST:
                    val[k] = np.full(n, c)
                elif op == ADD:
                    val[k] = val[a] + val[b]
                elif op == MUL:
                    val[k] = val[a] * val[b]
                elif op == NEG:
                    val[k] = -val[a]
                elif op == ABS:
                    val[k] = np.abs(val[a])
                elif op == MAX:
                    val[k] = np.maximum(val[a], val[b])
                elif op == EXP:
                    val[k] = np.exp(val[a])
                elif op == SIG:
                    val[k] = iv.sigmoid(val[a])
                else:
                    val[k] = np.tanh(val[a])
        return [val[r] for r in self.roots]

    # -- interval passes ----------------------------------------------

    def _node(self, k, L, H, lo, hi, n):
        op, a, b, c = self.code[k]
        if op == VAR:
            return lo[:, a].copy(), hi[:, a].copy()
        if op == CONST:
            return np.full(n, c), np.full(n, c)
        if op == ADD:
            return iv.add(L[a], H[a], L[b], H[b])
        if op == MUL:
            return iv.mul(L[a], H[a], L[b], H[b])
        if op == NEG:
            return iv.neg(L[a], H[a])
        if op == ABS:
            return iv.iabs(L[a], H[a])
        if op == MAX:
            return iv.imax(L[a], H[a], L[b], H[b])
        if op == EXP:
            return iv.exp(L[a], H[a])
        if op == SIG:
            return iv.isigmoid(L[a], H[a])
        return iv.itanh(L[a], H[a])

    def forward(self, lo: np.ndarray, hi: np.ndarray, bounds=None):
        """Natural interval extension of every node.

        ``bounds`` optionally holds per-node enclosures to intersect with as
        the pass proceeds (used to fold mean-value enclosures back in).
        """
        n = lo.shape[0]
        L: list = [None] * len(self.code)
        H: list = [None] * len(self.code)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(len(self.code)):
                l, h = self._node(k, L, H, lo, hi, n)
                if bounds is not None and bounds[0][k] is not None:
                    l, h = np.maximum(l, bounds[0][k]), np.minimum(h, bounds[1][k])
                L[k], H[k] = l, h
        return L, H

    def gradient(self, L, H):
        """Forward-mode interval gradients (N, nvars) of every node."""
        n = L[0].shape[0] if self.code else 0
        nv = self.nvars
        GL: list = [None] * len(self.code)
        GH: list = [None] * len(self.code)
        zero = np.zeros((n, nv))
        with np.errstate(over="ignore", invalid="ignore"):
            for k, (op, a, b, c) in enumerate(self.code):
                if op == VAR:
                    g = np.zeros((n, nv))
                    g[:, a] = 1.0
                    gl, gh = g, g
                elif op == CONST:
                    gl, gh = zero, zero
                elif op == ADD:
                    gl, gh = iv.add(GL[a], GH[a], GL[b], GH[b])
                elif op == MUL:
                    l1, h1 = iv.mul(GL[a], GH[a], L[b][:, None], H[b][:, None])
                    l2, h2 = iv.mul(L[a][:, None], H[a][:, None], GL[b], GH[b])
                    gl, gh = iv.add(l1, h1, l2, h2)
                elif op == NEG:
                    gl, gh = -GH[a], -GL[a]
                elif op == ABS:
                    pos = (L[a] >= 0)[:, None]
                    negv = (H[a] <= 0)[:, None]
                    m = np.maximum(np.abs(GL[a]), np.abs(GH[a]))
                    gl = np.where(pos, GL[a], np.where(negv, -GH[a], -m))
                    gh = np.where(pos, GH[a], np.where(negv, -GL[a], m))
                elif op == MAX:
                    left = (L[a] > H[b])[:, None]
                    right = (L[b] > H[a])[:, None]
                    hl, hh = iv.hull(GL[a], GH[a], GL[b], GH[b])
                    gl = np.where(left, GL[a], np.where(right, GL[b], hl))
                    gh = np.where(left, GH[a], np.where(right, GH[b], hh))
                else:
                    if op == EXP:
                        dl, dh = L[k], H[k]
                    elif op == SIG:
                        dl, dh = iv.dsigmoid(L[a], H[a])
                    else:
                        dl, dh = iv.dtanh(L[a], H[a])
                    gl, gh = iv.mul(GL[a], GH[a], dl[:, None], dh[:, None])
                gl, gh = iv._nan_safe(gl, gh)
                GL[k], GH[k] = gl, gh
        return GL, GH

    def tight_forward(self, lo: np.ndarray, hi: np.ndarray):
        """Node enclosures: natural extension intersected with mean-value forms."""
        L, H = self.forward(lo, hi)
        if self.nvars == 0 or not self.used_vars:
            return L, H
        GL, GH = self.gradient(L, H)
        mid = np.clip(0.5 * (lo + hi), lo, hi)
        ML, MH = self.forward(mid, mid)
        dlo = iv.down(lo - mid)
        dhi = iv.up(hi - mid)
        mv_lo: list = [None] * len(self.code)
        mv_hi: list = [None] * len(self.code)
        with np.errstate(over="ignore", invalid="ignore"):
            for k, (op, *_rest) in enumerate(self.code):
                if op in (VAR, CONST):
                    continue
                tl, th = iv.mul(GL[k], GH[k], dlo, dhi)
                sl, sh = iv.sum_outward(tl, th, axis=1)
                vl, vh = iv.add(ML[k], MH[k], sl, sh)
                vl, vh = iv._nan_safe(vl, vh)
                mv_lo[k], mv_hi[k] = vl, vh
        return self.forward(lo, hi, bounds=(mv_lo, mv_hi))

    def root_enclosure(self, lo, hi, tight: bool = False, root: int = 0):
        L, H = self.tight_forward(lo, hi) if tight else self.forward(lo, hi)
        r = self.roots[root]
        return L[r], H[r]

    def backward(self, L, H, lo, hi):
        """HC4 projection from (already narrowed) node enclosures to variables.

        Mutates ``L``/``H``; returns narrowed ``(lo, hi)`` and an empty mask.
        """
        lo = lo.copy()
        hi = hi.copy()
        n = lo.shape[0]
        empty = np.zeros(n, dtype=bool)

        def narrow(k, pl, ph):
            pl, ph = iv._nan_safe(pl, ph)
            L[k] = np.maximum(L[k], pl)
            H[k] = np.minimum(H[k], ph)

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for k in range(len(self.code) - 1, -1, -1):
                op, a, b, c = self.code[k]
                cl, ch = L[k], H[k]
                empty |= cl > ch
                if op == VAR:
                    lo[:, a] = np.maximum(lo[:, a], cl)
                    hi[:, a] = np.minimum(hi[:, a], ch)
                elif op == CONST:
                    continue
                elif op == ADD:
                    pl, ph = iv.sub(cl, ch, L[b], H[b])
                    narrow(a, pl, ph)
                    pl, ph = iv.sub(cl, ch, L[a], H[a])
                    narrow(b, pl, ph)
                elif op == MUL and a == b:
                    cl = np.maximum(cl, 0.0)
                    empty |= ch < 0
                    rl = iv.down(np.sqrt(cl))
                    rh = iv.up(np.sqrt(np.maximum(ch, 0.0)))
                    pos_l, pos_h = np.maximum(L[a], rl), np.minimum(H[a], rh)
                    neg_l, neg_h = np.maximum(L[a], -rh), np.minimum(H[a], -rl)
                    pos_ok, neg_ok = pos_l <= pos_h, neg_l <= neg_h
                    nl = np.where(pos_ok & neg_ok, np.minimum(pos_l, neg_l), np.where(pos_ok, pos_l, neg_l))
                    nh = np.where(pos_ok & neg_ok, np.maximum(pos_h, neg_h), np.where(pos_ok, pos_h, neg_h))
                    empty |= ~(pos_ok | neg_ok)
                    narrow(a, nl, nh)
                elif op == MUL:
                    ok = (L[b] > 0) | (H[b] < 0)
                    pl, ph = iv.div(cl, ch, L[b], H[b])
                    narrow(a, np.where(ok, pl, -np.inf), np.where(ok, ph, np.inf))
                    ok = (L[a] > 0) | (H[a] < 0)
                    pl, ph = iv.div(cl, ch, L[a], H[a])
                    narrow(b, np.where(ok, pl, -np.inf), np.where(ok, ph, np.inf))
                elif op == NEG:
                    narrow(a, -ch, -cl)
                elif op == ABS:
                    cl = np.maximum(cl, 0.0)
                    pos_l, pos_h = np.maximum(L[a], cl), np.minimum(H[a], ch)
                    neg_l, neg_h = np.maximum(L[a], -ch), np.minimum(H[a], -cl)
                    pos_ok, neg_ok = pos_l <= pos_h, neg_l <= neg_h
                    nl = np.where(pos_ok & neg_ok, np.minimum(pos_l, neg_l), np.where(pos_ok, pos_l, neg_l))
                    nh = np.where(pos_ok & neg_ok, np.maximum(pos_h, neg_h), np.where(pos_ok, pos_h, neg_h))
                    empty |= ~(pos_ok | neg_ok)
                    narrow(a, nl, nh)
                elif op == MAX:
                    narrow(a, np.full(n, -np.inf), ch)
                    narrow(b, np.full(n, -np.inf), ch)
                    a_low = H[a] < cl
                    b_low = H[b] < cl
                    narrow(b, np.where(a_low, cl, -np.inf), np.full(n, np.inf))
                    narrow(a, np.where(b_low, cl, -np.inf), np.full(n, np.inf))
                elif op == EXP:
                    narrow(a, *iv.ilog(cl, ch))
                elif op == SIG:
                    narrow(a, *iv.ilogit(cl, ch))
                else:
                    narrow(a, *iv.iatanh(cl, ch))
        empty |= np.any(lo > hi, axis=1)
        return lo, hi, empty
