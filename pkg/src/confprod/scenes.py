"""Scene files: the JSON description of a conformal product configuration
(factor metrics, conformal factors, chart domains), their validation with
JSON-path error locations, quasi-random point sampling, and a seeded random
scene factory used by the verification sweeps."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import product as _iproduct
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .expr import CoordSplit, ExprError, ProductPoint, ScalarExpr, parse
from .oracle import MetricField
from .product import ConformalProductConfig

__all__ = [
    "SceneError",
    "Scene",
    "scene_from_dict",
    "load_scene",
    "scene_digest",
    "sample_points",
    "grid_points",
    "random_scene_dict",
    "DEFAULT_TOLERANCES",
]

TWO_PI = 2.0 * math.pi

DEFAULT_TOLERANCES = {
    "oracle_rel": 1e-8,      # closed form vs oracle, relative
    "oracle_floor": 1e-10,   # absolute floor for the relative comparison
    "connection": 1e-9,      # connection coefficients vs oracle
    "identity_abs": 1e-10,   # pointwise identities (connLC11, nabla12, ...)
    "einstein": 1e-9,        # known Einstein instances
    "precondition": 1e-6,    # theorem hypotheses
    "split_residual": 1e-8,  # conformality residual of the splitting
}

# chart defaults: full period for periodic coordinates, a pole-free band
# otherwise
NONPERIODIC_DOMAIN = (0.3, 2.8)


class SceneError(ValueError):
    """Scene validation error; `path` locates the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Scene:
    split: CoordSplit
    cfg: ConformalProductConfig
    domain: np.ndarray          # (n, 2) intervals
    periodic: np.ndarray        # (n,) booleans
    lam: Optional[float]
    tolerances: dict
    seed: Optional[int]
    raw: dict = field(repr=False, default_factory=dict)


def _expect(cond, path, message):
    if not cond:
        raise SceneError(path, message)


def _parse_expr(text, split, path) -> ScalarExpr:
    _expect(isinstance(text, str), path, "expected an expression string")
    try:
        return parse(text, split)
    except ExprError as e:
        raise SceneError(path, str(e)) from e


def _metric_from_texts(rows, split, m, path) -> MetricField:
    _expect(isinstance(rows, list) and len(rows) == m, path,
            f"expected a {m}x{m} array of expression strings")
    for i, row in enumerate(rows):
        _expect(isinstance(row, list) and len(row) == m, f"{path}[{i}]",
                f"expected {m} entries")
    for i in range(m):
        for j in range(i + 1, m):
            if rows[i][j] != rows[j][i]:
                raise SceneError(
                    f"{path}[{i}][{j}]",
                    f"not symmetric by textual position: {rows[i][j]!r} vs "
                    f"{path}[{j}][{i}] = {rows[j][i]!r}",
                )
    exprs = [
        [_parse_expr(rows[i][j], split, f"{path}[{i}][{j}]") for j in range(m)]
        for i in range(m)
    ]
    return MetricField(exprs, split)


def scene_from_dict(doc: dict) -> Scene:
    """Validate and build a scene; raises SceneError with a JSON path."""
    _expect(isinstance(doc, dict), "$", "scene must be a JSON object")
    sp = doc.get("split")
    _expect(isinstance(sp, dict), "$.split", "missing split object")
    n1, n2 = sp.get("n1"), sp.get("n2")
    _expect(isinstance(n1, int) and n1 >= 1, "$.split.n1", "positive integer required")
    _expect(isinstance(n2, int) and n2 >= 1, "$.split.n2", "positive integer required")
    split = CoordSplit(n1, n2)
    n = split.n

    g1 = _metric_from_texts(doc.get("g1"), split, n1, "$.g1")
    g2 = _metric_from_texts(doc.get("g2"), split, n2, "$.g2")
    f1 = _parse_expr(doc.get("f1"), split, "$.f1")
    f2 = _parse_expr(doc.get("f2"), split, "$.f2")
    try:
        cfg = ConformalProductConfig(split, g1, g2, f1, f2)
    except ValueError as e:
        raise SceneError("$", str(e)) from e

    periodic = np.ones(n, dtype=bool)
    if "periodic" in doc:
        per = doc["periodic"]
        _expect(isinstance(per, list) and len(per) == n, "$.periodic",
                f"expected {n} booleans")
        for i, v in enumerate(per):
            _expect(isinstance(v, bool), f"$.periodic[{i}]", "expected a boolean")
        periodic = np.array(per, dtype=bool)

    domain = np.array([
        (0.0, TWO_PI) if periodic[i] else NONPERIODIC_DOMAIN for i in range(n)
    ])
    if "domain" in doc:
        dom = doc["domain"]
        _expect(isinstance(dom, list) and len(dom) == n, "$.domain",
                f"expected {n} [lo, hi] pairs")
        for i, pair in enumerate(dom):
            ok = (
                isinstance(pair, list) and len(pair) == 2
                and all(isinstance(v, (int, float)) for v in pair)
                and pair[0] < pair[1]
            )
            _expect(ok, f"$.domain[{i}]", "expected [lo, hi] with lo < hi")
            domain[i] = pair

    lam = doc.get("lambda")
    if lam is not None:
        _expect(isinstance(lam, (int, float)), "$.lambda", "expected a number")
        lam = float(lam)

    tolerances = dict(DEFAULT_TOLERANCES)
    if "tolerances" in doc:
        tols = doc["tolerances"]
        _expect(isinstance(tols, dict), "$.tolerances", "expected an object")
        for k, v in tols.items():
            _expect(k in DEFAULT_TOLERANCES, f"$.tolerances.{k}",
                    f"unknown tolerance (known: {sorted(DEFAULT_TOLERANCES)})")
            _expect(isinstance(v, (int, float)) and v > 0, f"$.tolerances.{k}",
                    "expected a positive number")
            tolerances[k] = float(v)

    seed = doc.get("seed")
    if seed is not None:
        _expect(isinstance(seed, int), "$.seed", "expected an integer")

    known = {"split", "g1", "g2", "f1", "f2", "domain", "periodic", "lambda",
             "tolerances", "seed"}
    for k in doc:
        _expect(k in known, f"$.{k}", "unknown scene field")

    return Scene(split=split, cfg=cfg, domain=domain, periodic=periodic,
                 lam=lam, tolerances=tolerances, seed=seed, raw=doc)


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SceneError("$", f"invalid JSON: {e}") from e
    return scene_from_dict(doc)


def scene_digest(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def sample_points(scene: Scene, count: int, seed: int):
    """Seeded low-discrepancy points mapped into the chart domain (avoids the
    symmetry-aligned false passes of lattice sampling)."""
    n = scene.split.n
    sampler = qmc.Halton(d=n, scramble=True, seed=seed)
    u = sampler.random(count)
    lo = scene.domain[:, 0]
    hi = scene.domain[:, 1]
    pts = lo + u * (hi - lo)
    return [ProductPoint(row[: scene.split.n1], row[scene.split.n1:]) for row in pts]


def grid_points(scene: Scene, per_axis: int) -> np.ndarray:
    """Product grid over the domain; periodic axes omit the duplicate
    endpoint."""
    axes = []
    for i in range(scene.split.n):
        lo, hi = scene.domain[i]
        if scene.periodic[i]:
            axes.append(np.linspace(lo, hi, per_axis, endpoint=False))
        else:
            axes.append(np.linspace(lo, hi, per_axis))
    return np.array([pt for pt in _iproduct(*axes)], dtype=float)


# ---------------------------------------------------------------------------
# random scene factory

def _r(rng, lo, hi) -> str:
    return repr(float(rng.uniform(lo, hi)))


def _rand_trig(rng, coords, amplitude) -> str:
    """One random bounded trig term over the given coordinate names."""
    fn = rng.choice(["sin", "cos"])
    k = int(rng.integers(1, 3))
    c = str(rng.choice(coords))
    arg = f"{k}*{c}+{_r(rng, 0.0, 6.28)}" if k > 1 else f"{c}+{_r(rng, 0.0, 6.28)}"
    term = f"{_r(rng, 0.3, 1.0)}*{fn}({arg})"
    if len(coords) > 1 and rng.random() < 0.4:
        c2 = str(rng.choice([c_ for c_ in coords if c_ != c]))
        fn2 = rng.choice(["sin", "cos"])
        term += f"*{fn2}({c2}+{_r(rng, 0.0, 6.28)})"
    return f"{repr(float(amplitude))}*({term})"


def _rand_factor_metric(rng, coords, m) -> list:
    rows = [["0"] * m for _ in range(m)]
    for i in range(m):
        base = _r(rng, 1.5, 2.5)
        if rng.random() < 0.7:
            rows[i][i] = f"{base}+{_rand_trig(rng, coords, 0.3)}"
        else:
            rows[i][i] = base
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < 0.5:
                off = _rand_trig(rng, coords, 0.12)
                rows[i][j] = rows[j][i] = off
    return rows


def random_scene_dict(seed: int, n1: int, n2: int) -> dict:
    """A seeded random conformal-product scene on torus charts: diagonally
    dominant factor metrics (so they stay SPD) and small generic conformal
    factors mixing both coordinate groups."""
    rng = np.random.default_rng(seed)
    xs = [f"x{i+1}" for i in range(n1)]
    ys = [f"y{a+1}" for a in range(n2)]
    f_terms1 = [_rand_trig(rng, xs + ys, 0.25) for _ in range(int(rng.integers(1, 3)))]
    f_terms2 = [_rand_trig(rng, xs + ys, 0.25) for _ in range(int(rng.integers(1, 3)))]
    return {
        "split": {"n1": n1, "n2": n2},
        "g1": _rand_factor_metric(rng, xs, n1),
        "g2": _rand_factor_metric(rng, ys, n2),
        "f1": "+".join(f_terms1),
        "f2": "+".join(f_terms2),
        "seed": int(seed),
    }
