"""Minimal forward-mode dual numbers with vector-valued tangents.

Used to push derivatives with respect to many parameters (Fourier
coefficients, transverse coordinates) through scalar computations in one
pass.  Arithmetic mixes freely with plain floats.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Dual", "dexp", "value_of", "tangent_of"]


class Dual:
    __slots__ = ("val", "tan")

    def __init__(self, val: float, tan):
        self.val = float(val)
        self.tan = np.asarray(tan, dtype=float)

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, self.tan + o.tan)
        return Dual(self.val + o, self.tan)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, self.tan - o.tan)
        return Dual(self.val - o, self.tan)

    def __rsub__(self, o):
        return Dual(o - self.val, -self.tan)

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val * o.val, self.val * o.tan + o.val * self.tan)
        return Dual(self.val * o, self.tan * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            iv = 1.0 / o.val
            return Dual(self.val * iv, (self.tan - self.val * iv * o.tan) * iv)
        return Dual(self.val / o, self.tan / o)

    def __rtruediv__(self, o):
        iv = 1.0 / self.val
        return Dual(o * iv, -o * iv * iv * self.tan)

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __pow__(self, k: int):
        k = int(k)
        if k == 0:
            return Dual(1.0, np.zeros_like(self.tan))
        return Dual(self.val**k, k * self.val ** (k - 1) * self.tan)

    def __repr__(self):
        return f"Dual({self.val}, {self.tan})"


def dexp(x):
    if isinstance(x, Dual):
        e = math.exp(x.val)
        return Dual(e, e * x.tan)
    return math.exp(x)


def value_of(x) -> float:
    return x.val if isinstance(x, Dual) else float(x)


def tangent_of(x, m: int) -> np.ndarray:
    return x.tan if isinstance(x, Dual) else np.zeros(m)
