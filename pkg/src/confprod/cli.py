"""Batch command-line interface.

Commands: `verify` (closed forms vs the coordinate oracle plus Lee/Weyl
identity checks on quasi-random points), `split` (hypothesis checks and the
conformal splitting construction), `ode` (one-dimensional-base residual
tables), `search` (Einstein-residual minimization over Fourier conformal
factors).  All inputs and reports are JSON; reports are deterministic for a
fixed scene and seed up to the wall_time_s field and are written atomically.

Exit codes: 0 all checks pass, 1 validation error, 2 theorem-precondition
failure, 3 numerical failure (non-finite values or residuals out of
tolerance).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
import warnings

import numpy as np

from .expr import CoordSplit, ProductPoint, eval_jet, eval_values, parse, to_text
from .oracle import christoffel, ricci_oracle, riemann_oracle
from .odecase import (
    Case3Config,
    HypothesisViolationError,
    OrderUnavailableError,
    TERMS,
    case3_residuals,
    homogeneity_check,
    kderiv_family_residual,
)
from .product import (
    EinsteinConstant,
    PreconditionError,
    adapted_reducibility_residual,
    assemble_metric,
    conformal_rescale,
    einstein1_residual,
    einstein_residual,
    hypothesis_check,
    lc_product,
    lee_form,
    oracle_filled_classes,
    ricci_cp,
    riemann_cp,
    theorem_split,
    weyl_compatibility_residual,
)
from .scenes import (
    DEFAULT_TOLERANCES,
    SceneError,
    grid_points,
    load_scene,
    sample_points,
    scene_digest,
)
from .search import (
    FourierParam,
    MetricDegeneracyError,
    NumericalAbortError,
    SearchConfig,
    _Evaluator,
    minimize,
    split_diagnostic,
)
from .tensors import BlockVector, rel_residual

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PRECONDITION = 2
EXIT_NUMERIC = 3


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if out:
        _atomic_write(out, text)


def _apply_tol_overrides(tolerances: dict, overrides) -> dict:
    tol = dict(tolerances)
    for item in overrides or []:
        if "=" not in item:
            raise SceneError("--tol", f"expected NAME=VALUE, got {item!r}")
        name, _, value = item.partition("=")
        if name not in DEFAULT_TOLERANCES:
            raise SceneError(
                "--tol", f"unknown tolerance {name!r} (known: {sorted(DEFAULT_TOLERANCES)})"
            )
        try:
            tol[name] = float(value)
        except ValueError as e:
            raise SceneError("--tol", f"bad value for {name}: {value!r}") from e
    return tol


class _Stat:
    def __init__(self, name: str, tolerance: float | None):
        self.name = name
        self.tolerance = tolerance
        self.values = []

    def add(self, v: float) -> None:
        self.values.append(float(v))

    def row(self) -> dict:
        vals = self.values or [float("nan")]
        mx = max(vals)
        row = {
            "name": self.name,
            "max": mx,
            "mean": sum(vals) / len(vals),
            "points": len(self.values),
            "tolerance": self.tolerance,
        }
        row["pass"] = bool(self.tolerance is None or mx <= self.tolerance)
        return row


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    scene = load_scene(args.scene)
    tol = _apply_tol_overrides(scene.tolerances, args.tol)
    t0 = time.monotonic()
    seed = args.seed if args.seed is not None else (scene.seed or 0)
    pts = sample_points(scene, args.points, seed)
    cfg = scene.cfg
    split = scene.split
    n1, n2, n = split.n1, split.n2, split.n
    asm = assemble_metric(cfg)
    rng = np.random.default_rng(seed)

    checks = {
        name: _Stat(name, t)
        for name, t in (
            ("ricci_vs_oracle_rel", tol["oracle_rel"]),
            ("riemann_vs_oracle_rel", tol["oracle_rel"]),
            ("lc_product_vs_oracle", tol["connection"]),
            ("connLC11", tol["identity_abs"]),
            ("nabla12", tol["identity_abs"]),
            ("weyl_compatibility", tol["identity_abs"]),
            ("lee_gauge_rule", tol["identity_abs"]),
        )
    }
    phi = parse("0.2*sin(x1+0.7)+0.1*cos(y1)", split)
    cfg_phi = conformal_rescale(cfg, phi)

    for p in pts:
        checks["ricci_vs_oracle_rel"].add(
            rel_residual(ricci_cp(cfg, p).mat, ricci_oracle(asm, p).mat,
                         floor=tol["oracle_floor"], rel=tol["oracle_rel"])
        )
        checks["riemann_vs_oracle_rel"].add(
            rel_residual(riemann_cp(cfg, p).components,
                         riemann_oracle(asm, p).components,
                         floor=tol["oracle_floor"], rel=tol["oracle_rel"])
        )
        gamma = christoffel(asm, p)
        worst = 0.0
        for which, r1, r2 in (("11", range(n1), range(n1)),
                              ("22", range(n1, n), range(n1, n)),
                              ("12", range(n1), range(n1, n))):
            lc = lc_product(cfg, p, which)
            for ii, i in enumerate(r1):
                for jj, j in enumerate(r2):
                    ref = gamma[:, i, j]
                    scale = max(1.0, float(np.max(np.abs(ref))))
                    worst = max(worst, float(np.max(np.abs(lc[ii, jj] - ref))) / scale)
        checks["lc_product_vs_oracle"].add(worst)

        gmat = asm.value(p)
        lc11 = lc_product(cfg, p, "11")
        d2f1 = eval_jet(cfg.f1, p, 1).d2()
        worst = 0.0
        for i in range(n1):
            for j in range(n1):
                v = gmat @ lc11[i, j]
                for a in range(n2):
                    worst = max(worst, abs(v[n1 + a] + gmat[i, j] * d2f1[a]))
        checks["connLC11"].add(worst)

        worst = 0.0
        for i in range(n1):
            for a in range(n2):
                X1 = BlockVector.basis(i, split)
                X2 = BlockVector.basis(n1 + a, split)
                worst = max(worst, adapted_reducibility_residual(cfg, p, X1, X2))
        checks["nabla12"].add(worst)

        X = BlockVector.from_full(rng.normal(size=n), split)
        Y = BlockVector.from_full(rng.normal(size=n), split)
        checks["weyl_compatibility"].add(weyl_compatibility_residual(cfg, p, X, Y))

        theta = lee_form(cfg, p).full
        theta_phi = lee_form(cfg_phi, p).full
        dphi = eval_jet(phi, p, 1).gradient()
        checks["lee_gauge_rule"].add(float(np.max(np.abs(theta_phi - (theta - dphi)))))

    rows = [s.row() for s in checks.values()]
    if scene.lam is not None:
        resid, lam_used = einstein_residual(cfg, pts, EinsteinConstant.given(scene.lam))
        rows.append({
            "name": "einstein_residual",
            "max": resid,
            "mean": resid,
            "points": len(pts),
            "tolerance": tol["einstein"],
            "pass": bool(resid <= tol["einstein"]),
            "lambda": lam_used,
        })
    ok = all(r["pass"] for r in rows)
    report = {
        "command": "verify",
        "scene_digest": scene_digest(scene.raw),
        "seed": seed,
        "points": args.points,
        "oracle_filled_riemann_classes": oracle_filled_classes(split),
        "checks": rows,
        "tolerances": tol,
        "pass": ok,
        "wall_time_s": time.monotonic() - t0,
    }
    _emit_report(report, args.out)
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# split

def _parse_basepoint(text: str, split: CoordSplit) -> ProductPoint:
    try:
        xs, ys = text.split(";")
        x = [float(v) for v in xs.split(",")]
        y = [float(v) for v in ys.split(",")]
        p = ProductPoint(x, y)
        p.check(split)
        return p
    except SceneError:
        raise
    except Exception as e:
        raise SceneError("--basepoint", f"expected 'x1,..;y1,..': {e}") from e


def cmd_split(args) -> int:
    scene = load_scene(args.scene)
    tol = _apply_tol_overrides(scene.tolerances, args.tol)
    t0 = time.monotonic()
    split = scene.split
    if args.basepoint:
        basepoint = _parse_basepoint(args.basepoint, split)
    else:
        mid = scene.domain.mean(axis=1)
        basepoint = ProductPoint.from_full(mid, split)
    grid = grid_points(scene, args.grid)
    pts = [ProductPoint.from_full(row, split) for row in grid]
    hyp = hypothesis_check(scene.cfg, pts, tol=tol["precondition"])
    report = {
        "command": "split",
        "scene_digest": scene_digest(scene.raw),
        "grid": args.grid,
        "basepoint": [list(map(float, basepoint.x)), list(map(float, basepoint.y))],
        "hypothesis": {
            "d1f1_max": hyp.d1f1_max,
            "d1d2f1_max": hyp.d1d2f1_max,
            "equivalent_normal_form": hyp.equivalent_normal_form,
        },
        "tolerances": tol,
    }
    try:
        result = theorem_split(scene.cfg, basepoint, grid, tol=tol["precondition"])
    except PreconditionError as e:
        report["error"] = {"which": e.which, "message": str(e)}
        report["pass"] = False
        report["wall_time_s"] = time.monotonic() - t0
        _emit_report(report, args.out)
        return EXIT_PRECONDITION

    sgrid = grid_points(scene, args.serialize_grid)
    ok = result.conformality_residual <= tol["split_residual"]
    report["regauged"] = result.regauged
    report["result"] = {
        "h1": [[to_text(e) for e in row] for row in result.h1.coeffs],
        "h2": [[to_text(e) for e in row] for row in result.h2.coeffs],
        "sigma": to_text(result.sigma),
        "serialize_grid": args.serialize_grid,
        "h1_samples": result.h1.values(sgrid).tolist(),
        "h2_samples": result.h2.values(sgrid).tolist(),
        "sigma_samples": eval_values(result.sigma, sgrid).tolist(),
        "conformality_residual": result.conformality_residual,
        "pass": bool(ok),
    }
    report["pass"] = bool(ok)
    report["wall_time_s"] = time.monotonic() - t0
    _emit_report(report, args.out)
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# ode

def cmd_ode(args) -> int:
    scene = load_scene(args.scene)
    tol = _apply_tol_overrides(scene.tolerances, args.tol)
    t0 = time.monotonic()
    if scene.split.n1 != 1:
        raise SceneError("$.split.n1", "ode command requires n1 = 1")
    seed = args.seed if args.seed is not None else (scene.seed or 0)
    pts = sample_points(scene, args.points, seed)
    if scene.lam is not None:
        lam = scene.lam
        lam_mode = "given"
    else:
        _, lam = einstein_residual(scene.cfg, pts[:1], EinsteinConstant.trace_estimated())
        lam_mode = "trace-estimated"
    c3 = Case3Config(scene.cfg, lam)

    fields = ["deriv22f2", "ric11sp", "f2deriv", "eqlambda", "f12"]
    stats = {name: _Stat(name, None) for name in fields}
    na_counts = {name: 0 for name in fields}
    for p in pts:
        r = case3_residuals(c3, p)
        for name in fields:
            v = getattr(r, name)
            if v is None:
                na_counts[name] += 1
            else:
                stats[name].add(abs(v))
    rows = []
    for name in fields:
        row = stats[name].row()
        row["not_applicable"] = na_counts[name]
        rows.append(row)

    for k in range(1, 5):
        st = _Stat(f"kderiv_k{k}", None)
        for p in pts:
            st.add(kderiv_family_residual(c3, p, k))
        rows.append(st.row())

    labels = ["A2", "A1", "A0"] + (["A-1"] if args.t_order >= 5 else [])
    for label in labels:
        st = _Stat(f"homogeneity_{label}", None)
        na = 0
        for p in pts:
            try:
                st.add(homogeneity_check(c3, p, TERMS[label], t_order_cap=args.t_order))
            except (PreconditionError, OrderUnavailableError):
                na += 1
        row = st.row()
        row["not_applicable"] = na
        rows.append(row)

    report = {
        "command": "ode",
        "scene_digest": scene_digest(scene.raw),
        "seed": seed,
        "points": args.points,
        "lambda": lam,
        "lambda_mode": lam_mode,
        "checks": rows,
        "tolerances": tol,
        "pass": True,
        "wall_time_s": time.monotonic() - t0,
    }
    _emit_report(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# search

def _search_config_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise SceneError("$", "search config must be a JSON object")
    sp = doc.get("split")
    if not (isinstance(sp, dict) and isinstance(sp.get("n1"), int)
            and isinstance(sp.get("n2"), int)):
        raise SceneError("$.split", "need integer n1, n2")
    split = CoordSplit(sp["n1"], sp["n2"])
    max_frequency = doc.get("max_frequency", 1)
    if not isinstance(max_frequency, int) or max_frequency < 1:
        raise SceneError("$.max_frequency", "positive integer required")

    sc = SearchConfig()
    numeric = {
        "quadrature": int, "max_iters": int, "step_init": float,
        "step_shrink": float, "step_grow": float, "armijo_c": float,
        "fd_step": float, "tolerance": float, "min_step": float,
    }
    for key, cast in numeric.items():
        if key in doc:
            try:
                setattr(sc, key, cast(doc[key]))
            except (TypeError, ValueError) as e:
                raise SceneError(f"$.{key}", str(e)) from e
    lm = doc.get("lambda_mode", "trace-averaged")
    if isinstance(lm, dict) and "fixed" in lm:
        sc.lambda_mode = "fixed"
        sc.lambda_fixed = float(lm["fixed"])
    elif lm in ("trace-averaged", "fixed"):
        sc.lambda_mode = lm
        if lm == "fixed":
            sc.lambda_fixed = float(doc.get("lambda", 0.0))
    else:
        raise SceneError("$.lambda_mode", f"unknown mode {lm!r}")
    if "gradient_mode" in doc:
        sc.gradient_mode = doc["gradient_mode"]
    try:
        sc.validate(max_frequency)
    except ValueError as e:
        raise SceneError("$", str(e)) from e

    init = doc.get("init", "zero")
    seed = doc.get("seed", 0)
    if init == "zero":
        params = FourierParam(split, max_frequency)
    elif isinstance(init, dict) and init.get("kind") == "single-cross-mode":
        params = FourierParam.single_cross_mode(
            split, max_frequency, float(init.get("amplitude", 0.05))
        )
    elif isinstance(init, dict) and init.get("kind") == "random":
        params = FourierParam(split, max_frequency)
        rng = np.random.default_rng(seed)
        vec = rng.normal(scale=float(init.get("scale", 0.05)), size=params.nparams)
        params = params.with_vector(vec)
    elif isinstance(init, dict) and "f1" in init and "f2" in init:
        try:
            params = FourierParam(split, max_frequency, init["f1"], init["f2"])
        except ValueError as e:
            raise SceneError("$.init", str(e)) from e
    else:
        raise SceneError("$.init", f"unrecognized init {init!r}")
    known = {"split", "max_frequency", "quadrature", "max_iters", "step_init",
             "step_shrink", "step_grow", "armijo_c", "fd_step", "tolerance",
             "min_step", "lambda_mode", "lambda", "gradient_mode", "init", "seed"}
    for k in doc:
        if k not in known:
            raise SceneError(f"$.{k}", "unknown search config field")
    return params, sc, doc


def cmd_search(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SceneError("$", f"invalid JSON: {e}") from e
    params, sc, doc = _search_config_from_dict(doc)
    t0 = time.monotonic()
    try:
        final, trace = minimize(params, sc)
        final_obj, lam = _Evaluator(final, sc).evaluate(final.vector())
    except NumericalAbortError as e:
        report = {
            "command": "search",
            "config_digest": scene_digest(doc),
            "error": str(e),
            "pass": False,
            "wall_time_s": time.monotonic() - t0,
        }
        _emit_report(report, args.report)
        return EXIT_NUMERIC

    lines = [
        json.dumps(
            {
                "iter": r.iter,
                "objective": r.objective,
                "grad_norm": r.grad_norm,
                "step": r.step,
                "split_diag": r.split_diag,
            },
            sort_keys=True,
        )
        for r in trace.records
    ]
    _atomic_write(args.out, "\n".join(lines) + "\n")

    report = {
        "command": "search",
        "config_digest": scene_digest(doc),
        "iterations": trace.records[-1].iter,
        "status": trace.status,
        "objective": float(final_obj),
        "lambda": float(lam),
        "split_diagnostic": split_diagnostic(final),
        "trace_file": args.out,
        "pass": True,
        "wall_time_s": time.monotonic() - t0,
    }
    _emit_report(report, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="confprod",
        description="Verification and exploration engine for conformal product metrics.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                       help="override a named tolerance")
        p.add_argument("--out", default=None, help="write the JSON report here")

    v = sub.add_parser("verify", help="closed forms vs oracle on sampled points")
    v.add_argument("--scene", required=True)
    v.add_argument("--points", type=int, default=20)
    v.add_argument("--seed", type=int, default=None)
    common(v)

    s = sub.add_parser("split", help="hypothesis checks and conformal splitting")
    s.add_argument("--scene", required=True)
    s.add_argument("--grid", type=int, default=33, help="residual grid per axis")
    s.add_argument("--serialize-grid", type=int, default=9,
                   help="per-axis resolution of the serialized samples")
    s.add_argument("--basepoint", default=None, help="'x1,..;y1,..'")
    common(s)

    o = sub.add_parser("ode", help="one-dimensional-base residual tables")
    o.add_argument("--scene", required=True)
    o.add_argument("--points", type=int, default=20)
    o.add_argument("--seed", type=int, default=None)
    o.add_argument("--t-order", type=int, default=4, choices=(4, 5),
                   help="t-derivative cap; 5 enables the degree -1 term")
    common(o)

    r = sub.add_parser("search", help="Einstein-residual minimization")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="JSON-lines trace output")
    r.add_argument("--report", default=None, help="write the JSON report here")
    r.add_argument("--tol", action="append", metavar="NAME=VALUE")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    warnings.filterwarnings("ignore", message="theorem-level checks")
    warnings.filterwarnings("ignore", message="Einstein checks")
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "split":
            return cmd_split(args)
        if args.command == "ode":
            return cmd_ode(args)
        if args.command == "search":
            return cmd_search(args)
    except SceneError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (HypothesisViolationError, FileNotFoundError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except PreconditionError as e:
        print(f"precondition failure: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (NumericalAbortError, MetricDegeneracyError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
