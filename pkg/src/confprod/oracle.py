"""Ground-truth curvature of an arbitrary chart metric, computed directly
from the coordinate formulas (Christoffel symbols from first metric
derivatives, curvature from dGamma + Gamma*Gamma) using exact jets of the
metric coefficients.  This module never imports the conformal-product closed
forms; it is the formula-independent oracle they are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import CoordSplit, ProductPoint, ScalarExpr, eval_jet, eval_values, to_text
from .tensors import Riemann4Value, SingularMetricError, Sym2Value

__all__ = [
    "MetricField",
    "CurvatureReport",
    "metric_jets",
    "christoffel",
    "riemann_oracle",
    "ricci_oracle",
    "scalar_oracle",
    "curvature_report",
    "christoffel_core",
    "riemann_core",
]


class MetricField:
    """Chart metric: symmetric matrix of closed-form coefficient expressions
    over the product coordinates.  Only the upper triangle is evaluated, so
    pointwise values are exactly symmetric."""

    __slots__ = ("split", "coeffs")

    def __init__(self, coeffs, split: CoordSplit):
        coeffs = list(list(row) for row in coeffs)
        m = len(coeffs)
        if any(len(row) != m for row in coeffs):
            raise ValueError("coefficient matrix must be square")
        for row in coeffs:
            for e in row:
                if not isinstance(e, ScalarExpr):
                    raise TypeError("coefficients must be ScalarExpr")
                if e.split != split:
                    raise ValueError("coefficient split mismatch")
        self.split = split
        self.coeffs = coeffs

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def value(self, p: ProductPoint) -> np.ndarray:
        m = self.dim
        g = np.empty((m, m))
        pf = p.full[None, :]
        for i in range(m):
            for j in range(i, m):
                g[i, j] = g[j, i] = eval_values(self.coeffs[i][j], pf)[0]
        return g

    def values(self, points: np.ndarray) -> np.ndarray:
        """Metric values on many points at once; returns (P, m, m)."""
        pts = np.asarray(points, dtype=float)
        m = self.dim
        out = np.empty((pts.shape[0], m, m))
        for i in range(m):
            for j in range(i, m):
                v = eval_values(self.coeffs[i][j], pts)
                out[:, i, j] = out[:, j, i] = v
        return out

    def sym2(self, p: ProductPoint, require_spd: bool = True) -> Sym2Value:
        if self.dim != self.split.n:
            raise ValueError("sym2 only for full product metrics")
        return Sym2Value(self.value(p), self.split, require_spd=require_spd)

    def __repr__(self):
        rows = [[to_text(e) for e in row] for row in self.coeffs]
        return f"MetricField({rows})"


def metric_jets(M: MetricField, p: ProductPoint, order: int = 2):
    """Evaluate coefficient jets; returns (g, dg, d2g) with
    dg[c, a, b] = d_c g_ab and d2g[c, d, a, b] = d_c d_d g_ab.
    The arrays span all product coordinates."""
    m = M.dim
    n = M.split.n
    g = np.empty((m, m))
    dg = np.zeros((n, m, m))
    d2g = np.zeros((n, n, m, m)) if order >= 2 else None
    for i in range(m):
        for j in range(i, m):
            jet = eval_jet(M.coeffs[i][j], p, order)
            g[i, j] = g[j, i] = jet.value
            grad = jet.gradient()
            dg[:, i, j] = dg[:, j, i] = grad
            if order >= 2:
                h = jet.hessian()
                d2g[:, :, i, j] = d2g[:, :, j, i] = h
    return g, dg, d2g


def christoffel_core(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma[k, i, j] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)."""
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(str(e)) from e
    S = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, S)


def riemann_core(g: np.ndarray, dg: np.ndarray, d2g: np.ndarray):
    """Fully covariant curvature R_{ijkl} = g(R(e_i, e_j) e_k, e_l), plus
    Gamma, from pointwise metric jets."""
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(str(e)) from e
    S = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    gamma = 0.5 * np.einsum("kl,lij->kij", ginv, S)
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)
    dS = (
        np.einsum("mijl->mlij", d2g)
        + np.einsum("mjil->mlij", d2g)
        - np.einsum("mlij->mlij", d2g)
    )
    dgamma = 0.5 * (
        np.einsum("mkl,lij->mkij", dginv, S) + np.einsum("kl,mlij->mkij", ginv, dS)
    )
    rup = (
        np.einsum("imjk->mijk", dgamma)
        - np.einsum("jmik->mijk", dgamma)
        + np.einsum("mil,ljk->mijk", gamma, gamma)
        - np.einsum("mjl,lik->mijk", gamma, gamma)
    )
    riem = np.einsum("lm,mijk->ijkl", g, rup)
    return riem, gamma


def christoffel(M: MetricField, p: ProductPoint) -> np.ndarray:
    """Christoffel symbols Gamma[k, i, j] of the chart metric at p."""
    g, dg, _ = metric_jets(M, p, order=1)
    return christoffel_core(g, dg)


def riemann_oracle(M: MetricField, p: ProductPoint) -> Riemann4Value:
    """Covariant curvature tensor of the chart metric at p."""
    g, dg, d2g = metric_jets(M, p, order=2)
    riem, _ = riemann_core(g, dg, d2g)
    return Riemann4Value(riem, M.split)


def ricci_oracle(M: MetricField, p: ProductPoint) -> Sym2Value:
    """Ricci tensor Ric_ij = g^{ab} R_{iabj} of the chart metric at p."""
    g, dg, d2g = metric_jets(M, p, order=2)
    riem, _ = riemann_core(g, dg, d2g)
    ric = np.einsum("ab,iabj->ij", np.linalg.inv(g), riem)
    return Sym2Value(0.5 * (ric + ric.T), M.split)


def scalar_oracle(M: MetricField, p: ProductPoint) -> float:
    g = M.value(p)
    ric = ricci_oracle(M, p)
    return float(np.einsum("ij,ij->", np.linalg.inv(g), ric.mat))


@dataclass
class CurvatureReport:
    """All curvature data of a chart metric at one point."""

    point: ProductPoint
    gamma: np.ndarray
    riemann: Riemann4Value
    ricci: Sym2Value
    scalar: float


def curvature_report(M: MetricField, p: ProductPoint) -> CurvatureReport:
    g, dg, d2g = metric_jets(M, p, order=2)
    riem, gamma = riemann_core(g, dg, d2g)
    ginv = np.linalg.inv(g)
    ric = np.einsum("ab,iabj->ij", ginv, riem)
    ric = 0.5 * (ric + ric.T)
    scal = float(np.einsum("ij,ij->", ginv, ric))
    return CurvatureReport(
        point=p,
        gamma=gamma,
        riemann=Riemann4Value(riem, M.split),
        ricci=Sym2Value(ric, M.split),
        scalar=scal,
    )
