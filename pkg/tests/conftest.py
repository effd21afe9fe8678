import math

import numpy as np
import pytest

from confprod.expr import CoordSplit, ProductPoint, eval_values, parse
from confprod.oracle import MetricField
from confprod.product import ConformalProductConfig
from confprod.scenes import random_scene_dict, scene_from_dict


def mk_metric(split, rows):
    return MetricField([[parse(s, split) for s in row] for row in rows], split)


def mk_config(n1, n2, g1rows, g2rows, f1, f2):
    split = CoordSplit(n1, n2)
    return ConformalProductConfig(
        split, mk_metric(split, g1rows), mk_metric(split, g2rows),
        parse(f1, split), parse(f2, split),
    )


def flat_config(n1, n2, f1="0", f2="0"):
    eye1 = [["1" if i == j else "0" for j in range(n1)] for i in range(n1)]
    eye2 = [["1" if i == j else "0" for j in range(n2)] for i in range(n2)]
    return mk_config(n1, n2, eye1, eye2, f1, f2)


def random_config(seed, n1, n2):
    return scene_from_dict(random_scene_dict(seed, n1, n2)).cfg


def random_points(rng, split, count, lo=0.0, hi=2.0 * math.pi):
    return [
        ProductPoint(rng.uniform(lo, hi, split.n1), rng.uniform(lo, hi, split.n2))
        for _ in range(count)
    ]


def fd_partial(expr, point_full, var_indices, h=1e-4):
    """Nested central finite differences of an expression, the independent
    derivative oracle the jets are checked against."""
    if not var_indices:
        return float(eval_values(expr, np.asarray(point_full)[None, :])[0])
    i, rest = var_indices[0], var_indices[1:]
    up = np.array(point_full, dtype=float)
    dn = up.copy()
    up[i] += h
    dn[i] -= h
    return (fd_partial(expr, up, rest, h) - fd_partial(expr, dn, rest, h)) / (2 * h)


class Dual2:
    """Second-order dual number carrying (value, d/dx, d/dy, d2/dxdy): an
    independent route to mixed partials, separate from the Taylor engine."""

    def __init__(self, v, dx=0.0, dy=0.0, dxy=0.0):
        self.v, self.dx, self.dy, self.dxy = float(v), float(dx), float(dy), float(dxy)

    @staticmethod
    def lift(o):
        return o if isinstance(o, Dual2) else Dual2(o)

    def __add__(self, o):
        o = Dual2.lift(o)
        return Dual2(self.v + o.v, self.dx + o.dx, self.dy + o.dy, self.dxy + o.dxy)

    __radd__ = __add__

    def __sub__(self, o):
        o = Dual2.lift(o)
        return Dual2(self.v - o.v, self.dx - o.dx, self.dy - o.dy, self.dxy - o.dxy)

    def __rsub__(self, o):
        return Dual2.lift(o) - self

    def __mul__(self, o):
        o = Dual2.lift(o)
        return Dual2(
            self.v * o.v,
            self.dx * o.v + self.v * o.dx,
            self.dy * o.v + self.v * o.dy,
            self.dxy * o.v + self.dx * o.dy + self.dy * o.dx + self.v * o.dxy,
        )

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self * Dual2.lift(o)._recip()

    def __rtruediv__(self, o):
        return Dual2.lift(o) * self._recip()

    def _recip(self):
        iv = 1.0 / self.v
        return self._chain(iv, -iv * iv, 2.0 * iv**3)

    def __neg__(self):
        return Dual2(-self.v, -self.dx, -self.dy, -self.dxy)

    def __pow__(self, k):
        k = int(k)
        if k == 0:
            return Dual2(1.0)
        if k < 0:
            return (self ** (-k))._recip()
        out = Dual2(1.0)
        for _ in range(k):
            out = out * self
        return out

    def _chain(self, h, hp, hpp):
        """Compose with a univariate h given h(v), h'(v), h''(v)."""
        return Dual2(
            h,
            hp * self.dx,
            hp * self.dy,
            hpp * self.dx * self.dy + hp * self.dxy,
        )

    def sin(self):
        return self._chain(math.sin(self.v), math.cos(self.v), -math.sin(self.v))

    def cos(self):
        return self._chain(math.cos(self.v), -math.sin(self.v), -math.cos(self.v))

    def exp(self):
        e = math.exp(self.v)
        return self._chain(e, e, e)

    def log(self):
        return self._chain(math.log(self.v), 1.0 / self.v, -1.0 / self.v**2)

    def sinh(self):
        return self._chain(math.sinh(self.v), math.cosh(self.v), math.sinh(self.v))

    def cosh(self):
        return self._chain(math.cosh(self.v), math.sinh(self.v), math.cosh(self.v))


DUAL2_FUNCS = {
    "sin": lambda u: Dual2.lift(u).sin(),
    "cos": lambda u: Dual2.lift(u).cos(),
    "exp": lambda u: Dual2.lift(u).exp(),
    "log": lambda u: Dual2.lift(u).log(),
    "sinh": lambda u: Dual2.lift(u).sinh(),
    "cosh": lambda u: Dual2.lift(u).cosh(),
}


def dual2_mixed(expr, p, i, j):
    """d2/dx_i dy_j via nested duals (global indices i in x-block, j in
    y-block)."""
    split = expr.split
    full = np.concatenate([p.x, p.y])
    values = []
    for k in range(split.n):
        values.append(
            Dual2(full[k], dx=1.0 if k == i else 0.0, dy=1.0 if k == j else 0.0)
        )
    from confprod.expr import eval_generic

    out = eval_generic(expr, values, DUAL2_FUNCS)
    return Dual2.lift(out).dxy


def random_expr_text(rng, split, depth=2):
    """Random expression exercising every grammar production while staying
    bounded and domain-safe (denominators and log arguments kept positive)."""
    coords = [split.var_name(i) for i in range(split.n)]

    def lin():
        c = rng.choice(coords)
        k = int(rng.integers(1, 3))
        base = f"{k}*{c}" if k > 1 else c
        if rng.random() < 0.5:
            base += f"+{repr(float(rng.uniform(0, 6.28)))}"
        return base

    def bounded(d):
        r = rng.random()
        if d <= 0 or r < 0.25:
            if rng.random() < 0.4:
                return repr(float(rng.uniform(-1.5, 1.5)))
            fn = rng.choice(["sin", "cos"])
            return f"{fn}({lin()})"
        if r < 0.40:
            return f"({bounded(d - 1)}+{bounded(d - 1)})"
        if r < 0.55:
            return f"({bounded(d - 1)}-{bounded(d - 1)})"
        if r < 0.70:
            return f"{bounded(d - 1)}*{bounded(d - 1)}"
        if r < 0.78:
            return f"{bounded(d - 1)}/({repr(float(rng.uniform(3, 5)))}+sin({lin()}))"
        if r < 0.84:
            return f"exp(0.5*sin({lin()}))"
        if r < 0.88:
            return f"log({repr(float(rng.uniform(3, 5)))}+cos({lin()}))"
        if r < 0.92:
            return f"sinh(0.7*cos({lin()}))"
        if r < 0.96:
            return f"cosh(0.6*sin({lin()}))"
        k = int(rng.integers(2, 4))
        return f"sin({lin()})^{k}"

    text = bounded(depth)
    if rng.random() < 0.3:
        text = f"-{text}" if text[0] not in "-(" else f"-({text})"
    return text


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
