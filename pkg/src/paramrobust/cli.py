"""Command-line front end.

Exit codes: 0 robust / verified, 1 counterexample or failed target,
2 usage or I/O error, 3 solver gave up (unknown).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetError, domain_from_dataset, load_dataset
from .encoder import SIDES, QueryKind, RobustnessQuery, encode
from .fixtures import MLP_DOMAIN, resolve_model, resolve_path
from .interval import Box
from .network import Network, ParamVector, flatten
from .optimizer import DEFAULT_TOLERANCE, estimate_eps_global, estimate_eps_local, estimate_sigma, estimation_config
from .quantization import QuantScheme, quantize, safe_bits_search, verify_quantized
from .scan import scan_inputs, write_scan_csv
from .solver import DeltaSat, SolverConfig, Unsat, Verdict, decide

SCHEMA_VERSION = 1
EXIT_OK, EXIT_COUNTEREXAMPLE, EXIT_USAGE, EXIT_UNKNOWN = 0, 1, 2, 3

# published cat-model values, printed next to ours for comparison
CAT_REFERENCE = {
    0.005: {"eps": 0.00691, "sigma_above": 0.024, "sigma_below": 0.021},
    0.01: {"eps": 0.05054, "sigma_above": 0.052, "sigma_below": 0.04},
}
REPORT_DELTAS = (0.005, 0.01)
REPORT_MODELS = ("cat", "mlp_relu", "mlp_linear")

logger = logging.getLogger("paramrobust")


class UsageError(Exception):
    pass


# -- manifest --------------------------------------------------------------


@dataclass
class Manifest:
    model_ref: str
    net: Network
    query: dict
    p0: ParamVector
    domain: Box | None
    x0: np.ndarray | None


def _read_query(ref: str | None) -> dict:
    if ref is None:
        return {}
    text = ref if ref.lstrip().startswith("{") else None
    if text is None:
        path = Path(ref)
        if not path.is_file():
            raise UsageError(f"query file not found: {ref}")
        text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"query is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("query must be a JSON object")
    return doc


def _domain(q: dict) -> Box | None:
    if "domain" in q:
        d = q["domain"]
        try:
            return Box(d["lo"], d["hi"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad domain: {exc}") from None
    if "dataset" in q:
        ds = q["dataset"]
        if isinstance(ds, str):
            ds = {"path": ds}
        try:
            pts = load_dataset(resolve_path(ds["path"]), ds.get("features"), ds.get("label"))
        except (OSError, DatasetError, KeyError) as exc:
            raise UsageError(f"cannot load dataset: {exc}") from None
        return domain_from_dataset(pts)
    return None


def load_manifest(args) -> Manifest:
    q = _read_query(getattr(args, "query", None))
    ref = args.model or q.get("model")
    if ref is None:
        raise UsageError("no model given (use --model or a 'model' key in the query)")
    try:
        net = resolve_model(ref)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load model {ref!r}: {exc}") from None
    p0 = flatten(net)
    if "p0" in q:
        vals = np.asarray(q["p0"], dtype=float)
        if vals.shape != (net.n_params,):
            raise UsageError(f"p0 must have {net.n_params} entries")
        p0 = p0.with_values(vals)
    x0 = np.asarray(q["x0"], dtype=float) if "x0" in q else None
    if x0 is not None and x0.shape != (net.input_dim,):
        raise UsageError(f"x0 must have {net.input_dim} entries")
    domain = _domain(q)
    if domain is not None and len(domain) != net.input_dim:
        raise UsageError(f"domain must have {net.input_dim} dimensions")
    return Manifest(ref, net, q, p0, domain, x0)


def _float(q: dict, key: str, default=None) -> float:
    if key not in q:
        if default is None:
            raise UsageError(f"query needs {key!r}")
        return default
    try:
        return float(q[key])
    except (TypeError, ValueError):
        raise UsageError(f"{key!r} must be a number") from None


def _kind(q: dict) -> QueryKind:
    try:
        return QueryKind(q.get("kind"))
    except ValueError:
        raise UsageError(f"kind must be one of {[k.value for k in QueryKind]}") from None


def _robustness_query(m: Manifest, delta: float | None = None) -> RobustnessQuery:
    q = m.query
    kind = _kind(q)
    fields = dict(kind=kind, net=m.net, p0=m.p0, delta=_float(q, "delta") if delta is None else delta)
    if kind in (QueryKind.LOCAL_EPS, QueryKind.GLOBAL_EPS):
        fields["epsilon"] = _float(q, "epsilon")
    if kind is QueryKind.SIGMA_FLIP:
        fields["sigma"] = _float(q, "sigma")
    if kind.is_local:
        fields["x0"] = m.x0
    else:
        fields["domain"] = m.domain
    try:
        return RobustnessQuery(**fields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solver_config(args, estimation: bool = False) -> SolverConfig:
    kw = dict(deterministic=True)
    if args.precision is not None:
        kw["precision"] = args.precision
    if args.max_splits is not None:
        kw["max_splits"] = args.max_splits
    try:
        return estimation_config(**kw) if estimation else SolverConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- output ----------------------------------------------------------------


def _verdict_doc(v: Verdict) -> dict:
    doc = {"verdict": str(v), "splits": v.splits}
    if isinstance(v, DeltaSat):
        doc["witness"] = v.assignment()
    return doc


def _exit_code(v: Verdict) -> int:
    if isinstance(v, Unsat):
        return EXIT_OK
    if isinstance(v, DeltaSat):
        return EXIT_COUNTEREXAMPLE
    return EXIT_UNKNOWN


def _emit(args, doc) -> None:
    if isinstance(doc, dict):
        doc = {"schema_version": SCHEMA_VERSION, **doc}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _write(args, text)


def _write(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------


def cmd_verify(args) -> int:
    m = load_manifest(args)
    rq = _robustness_query(m)
    verdict = decide(encode(rq), _solver_config(args))
    _emit(args, {"command": "verify", "kind": rq.kind.value, "delta": rq.delta, **_verdict_doc(verdict)})
    return _exit_code(verdict)


def _reference_values(model_ref: str, quantity: str, delta: float, side: str | None):
    if model_ref != "builtin:cat" or delta not in CAT_REFERENCE:
        return None
    ref = CAT_REFERENCE[delta]
    if quantity == "eps":
        return {"eps": ref["eps"]}
    if side in ("above", "below"):
        return {f"sigma_{side}": ref[f"sigma_{side}"]}
    return {"sigma_above": ref["sigma_above"], "sigma_below": ref["sigma_below"]}


def cmd_estimate(args) -> int:
    m = load_manifest(args)
    q = m.query
    kind = _kind(q)
    delta = _float(q, "delta")
    if delta < 0:
        raise UsageError("delta must be nonnegative")
    cfg = _solver_config(args, estimation=True)
    tol = args.tolerance
    side = None
    if kind is QueryKind.LOCAL_EPS:
        if m.x0 is None:
            raise UsageError("LocalEps needs x0")
        est, quantity = estimate_eps_local(m.net, m.p0, m.x0, delta, cfg, tol), "eps"
    elif m.domain is None:
        raise UsageError(f"{kind.value} needs a domain or dataset")
    elif kind is QueryKind.GLOBAL_EPS:
        est, quantity = estimate_eps_global(m.net, m.p0, m.domain, delta, cfg, tol), "eps"
    elif kind is QueryKind.SIGMA_FLIP:
        side = q.get("side", "both")
        if side not in SIDES:
            raise UsageError(f"side must be one of {SIDES}")
        est, quantity = estimate_sigma(m.net, m.p0, m.domain, delta, side, cfg, tol), "sigma"
    else:
        raise UsageError(f"{kind.value} has no estimation problem; use LocalEps, GlobalEps or SigmaFlip")
    doc = {"command": "estimate", "kind": kind.value, "quantity": quantity, "delta": delta, **est.to_dict()}
    if side is not None:
        doc["side"] = side
    if m.domain is not None and not kind.is_local:
        doc["domain"] = m.domain.to_dict()
    ref = _reference_values(m.model_ref, quantity, delta, side)
    if ref is not None:
        doc["published_reference"] = ref
    _emit(args, doc)
    return EXIT_OK if est.converged else EXIT_UNKNOWN


def cmd_quantize(args) -> int:
    m = load_manifest(args)
    q = m.query
    cfg = _solver_config(args)
    if "scheme" in q:
        try:
            scheme = QuantScheme.from_dict(q["scheme"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad scheme: {exc}") from None
        rq = _robustness_query(m, delta=0.0)
        res = verify_quantized(m.net, scheme, rq, cfg)
        _emit(args, {"command": "quantize", "mode": "verify", "kind": rq.kind.value, **res.to_dict()})
        return _exit_code(res.box_verdict)
    kind = _kind(q)
    if kind not in (QueryKind.GLOBAL_EPS, QueryKind.SIGMA_FLIP) or m.domain is None:
        raise UsageError("bit-width search needs a GlobalEps or SigmaFlip query with a domain")
    target_kind = "eps" if kind is QueryKind.GLOBAL_EPS else "sigma"
    target = _float(q, "epsilon" if target_kind == "eps" else "sigma")
    res = safe_bits_search(m.net, m.domain, target, cfg, kind=target_kind, p0=m.p0)
    doc = {"command": "quantize", "mode": "search", "kind": kind.value, "target": target, **res.to_dict()}
    if res.found:
        doc["report"] = quantize(m.p0, QuantScheme(res.frac_bits)).to_dict()
    _emit(args, doc)
    return EXIT_OK if res.found else EXIT_COUNTEREXAMPLE


def cmd_scan(args) -> int:
    m = load_manifest(args)
    q = m.query
    if m.domain is None:
        raise UsageError("scan needs a domain or dataset")
    delta = _float(q, "delta")
    n = int(q.get("n", 1000))
    if n < 1:
        raise UsageError("n must be at least 1")
    mode = "fast" if args.fast_scan else q.get("mode", "auto")
    records = scan_inputs(m.net, m.p0, m.domain, delta, n, seed=args.seed, mode=mode,
                          config=_solver_config(args), tolerance=args.tolerance,
                          workers=max(1, args.workers))
    if args.format == "json":
        _emit(args, {
            "command": "scan", "delta": delta, "seed": args.seed, "records": [
                {"index": r.index, "x": r.x.tolist(), "confidence": r.confidence, "label": r.label,
                 "margin": r.margin, "eps_lower": r.eps_lower, "eps_upper": r.eps_upper,
                 "flippable": r.flippable, "status": r.status}
                for r in records
            ],
        })
    else:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                write_scan_csv(records, fh)
        else:
            write_scan_csv(records, sys.stdout)
    return EXIT_UNKNOWN if any(r.flippable is None for r in records) else EXIT_OK


def report_rows(args) -> list[dict]:
    """Eps and sigma enclosures for the bundled models at the report deltas."""
    cfg = _solver_config(args, estimation=True)
    cats_box = domain_from_dataset(load_dataset(resolve_path("builtin:cats")))
    rows = []
    for name in REPORT_MODELS:
        net = resolve_model(f"builtin:{name}")
        dom = cats_box if name == "cat" else MLP_DOMAIN
        for delta in REPORT_DELTAS:
            ests = {
                "eps": estimate_eps_global(net, None, dom, delta, cfg, args.tolerance),
                "sigma_above": estimate_sigma(net, None, dom, delta, "above", cfg, args.tolerance),
                "sigma_below": estimate_sigma(net, None, dom, delta, "below", cfg, args.tolerance),
            }
            for quantity, est in ests.items():
                ref = CAT_REFERENCE[delta][quantity] if name == "cat" else None
                rows.append({"model": name, "delta": delta, "quantity": quantity, "lower": est.lower,
                             "upper": est.upper, "converged": est.converged, "published": ref})
    return rows


def format_report(rows: list[dict]) -> str:
    lines = [f"{'':14}" + "".join(f"{m:>24}" for m in REPORT_MODELS) + f"{'cat (published)':>18}"]
    for delta in REPORT_DELTAS:
        lines.append(f"delta = {delta}")
        for quantity in ("eps", "sigma_above", "sigma_below"):
            cells = []
            pub = None
            for m in REPORT_MODELS:
                r = next(r for r in rows if r["model"] == m and r["delta"] == delta and r["quantity"] == quantity)
                cells.append(f"[{r['lower']:.5f}, {r['upper']:.5f}]")
                pub = r["published"] if m == "cat" else pub
            lines.append(f"  {quantity:<12}" + "".join(f"{c:>24}" for c in cells) + f"{pub:>18}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    rows = report_rows(args)
    if args.format == "json":
        _emit(args, {"command": "report", "rows": rows})
    elif args.format == "csv":
        cols = ("model", "delta", "quantity", "lower", "upper", "converged", "published")
        out = [",".join(cols)]
        for r in rows:
            out.append(",".join("" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else str(r[c])
                                for c in cols))
        _write(args, "\n".join(out) + "\n")
    else:
        _write(args, format_report(rows))
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_UNKNOWN


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON path or builtin:<name>")
    common.add_argument("--query", help="query config JSON path (or inline JSON)")
    common.add_argument("--precision", type=float, help="solver precision (numerical slack)")
    common.add_argument("--max-splits", type=int, help="solver split budget")
    common.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, help="optimality gap")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--deterministic", action="store_true", help="pin outputs (the default behaviour)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("json", "csv", "text"))
    common.add_argument("--fast-scan", action="store_true", help="grid/interval eps per scan point")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="paramrobust", description="Parameter-robustness analysis of small networks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("verify", cmd_verify, "decide a robustness query"),
        ("estimate", cmd_estimate, "certified eps* or sigma* enclosure"),
        ("quantize", cmd_quantize, "check a fixed-point scheme or search the bit width"),
        ("scan", cmd_scan, "per-input scan CSV"),
        ("report", cmd_report, "eps/sigma table for the bundled models"),
    ):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.format is None:
        args.format = {"scan": "csv", "report": "text"}.get(args.command, "json")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
