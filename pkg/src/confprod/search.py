"""Numerical minimization of the Einstein residual over Fourier-parametrized
conformal factors on flat torus factors.

The ansatz builds the parallel-Lee-form hypothesis into the parametrization:
f1 is a truncated Fourier series in the y-coordinates only, f2 a series in all
coordinates.  The objective is the mean squared Einstein residual of the
closed-form Ricci tensor over a uniform quadrature grid; gradients are exact
(dual numbers pushed through the closed forms, "jet" mode) or forward
differences.  Plain gradient descent with Armijo backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as _iproduct
from typing import Optional

import numpy as np

from .dual import Dual, dexp, value_of
from .expr import CoordSplit, ScalarExpr, call, const, coord
from .product import ricci_blocks, scalar_from_blocks

__all__ = [
    "FourierBasis",
    "FourierParam",
    "SearchConfig",
    "SearchTrace",
    "TraceRecord",
    "MetricDegeneracyError",
    "NumericalAbortError",
    "quadrature_grid",
    "objective",
    "gradient",
    "minimize",
    "split_diagnostic",
    "fourier_expr",
]


class MetricDegeneracyError(ValueError):
    pass


class NumericalAbortError(RuntimeError):
    """Objective became non-finite; carries the offending parameter vector."""

    def __init__(self, message: str, params):
        super().__init__(message)
        self.params = params


# exp(2 f) outside this window counts as a degenerate conformal factor
_SCALE_MIN, _SCALE_MAX = 1e-8, 1e8


class FourierBasis:
    """Real truncated Fourier basis on the n-torus: constant plus
    (cos(k.theta), sin(k.theta)) for canonical nonzero integer modes k with
    |k|_inf <= max_frequency; `active` masks which coordinates may carry
    frequency content."""

    def __init__(self, split: CoordSplit, max_frequency: int, active: np.ndarray):
        self.split = split
        self.max_frequency = int(max_frequency)
        self.active = np.asarray(active, dtype=bool)
        n = split.n
        F = self.max_frequency
        modes = []
        ranges = [range(-F, F + 1) if self.active[i] else range(0, 1) for i in range(n)]
        for k in _iproduct(*ranges):
            nz = [v for v in k if v != 0]
            if not nz or nz[0] < 0:
                continue
            modes.append(k)
        self.modes = np.array(modes, dtype=int).reshape(len(modes), n)
        self.mode_index = {tuple(m): i for i, m in enumerate(self.modes)}
        self.nparams = 1 + 2 * len(self.modes)

    def design(self, points: np.ndarray):
        """(B0, B1, B2): value/gradient/Hessian design matrices so that
        f = B0 @ c, df_i = B1[:, i, :] @ c, etc., for coefficient layout
        [const, cos_1, sin_1, cos_2, sin_2, ...]."""
        pts = np.asarray(points, dtype=float)
        P, n = pts.shape
        m = len(self.modes)
        B0 = np.zeros((P, self.nparams))
        B1 = np.zeros((P, n, self.nparams))
        B2 = np.zeros((P, n, n, self.nparams))
        B0[:, 0] = 1.0
        if m:
            phase = pts @ self.modes.T  # (P, m)
            cphase = np.cos(phase)
            sphase = np.sin(phase)
            K = self.modes.astype(float)  # (m, n)
            B0[:, 1::2] = cphase
            B0[:, 2::2] = sphase
            B1[:, :, 1::2] = -sphase[:, None, :] * K.T[None, :, :]
            B1[:, :, 2::2] = cphase[:, None, :] * K.T[None, :, :]
            KK = K.T[None, :, None, :] * K.T[None, None, :, :]  # (1, n, n, m)
            B2[:, :, :, 1::2] = -cphase[:, None, None, :] * KK
            B2[:, :, :, 2::2] = -sphase[:, None, None, :] * KK
        return B0, B1, B2

    def values(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        B0, _, _ = self.design(points)
        return B0 @ coeffs


class FourierParam:
    """Search parameters: Fourier coefficients of the conformal factors, with
    f1 restricted to y-frequencies only (so d1 f1 = 0 holds identically)."""

    def __init__(self, split: CoordSplit, max_frequency: int,
                 f1_coeffs=None, f2_coeffs=None):
        self.split = split
        self.max_frequency = int(max_frequency)
        y_active = np.array([i >= split.n1 for i in range(split.n)])
        self.basis1 = FourierBasis(split, max_frequency, y_active)
        self.basis2 = FourierBasis(split, max_frequency, np.ones(split.n, dtype=bool))
        self.f1_coeffs = (
            np.zeros(self.basis1.nparams) if f1_coeffs is None
            else np.asarray(f1_coeffs, dtype=float).copy()
        )
        self.f2_coeffs = (
            np.zeros(self.basis2.nparams) if f2_coeffs is None
            else np.asarray(f2_coeffs, dtype=float).copy()
        )
        if self.f1_coeffs.shape != (self.basis1.nparams,):
            raise ValueError("f1 coefficient length mismatch")
        if self.f2_coeffs.shape != (self.basis2.nparams,):
            raise ValueError("f2 coefficient length mismatch")

    @property
    def nparams(self) -> int:
        return self.basis1.nparams + self.basis2.nparams

    def vector(self) -> np.ndarray:
        return np.concatenate([self.f1_coeffs, self.f2_coeffs])

    def with_vector(self, vec: np.ndarray) -> "FourierParam":
        m1 = self.basis1.nparams
        return FourierParam(self.split, self.max_frequency, vec[:m1], vec[m1:])

    def set_f2_mode(self, k, cos_coeff: float = 0.0, sin_coeff: float = 0.0) -> None:
        idx = self.basis2.mode_index[tuple(k)]
        self.f2_coeffs[1 + 2 * idx] = cos_coeff
        self.f2_coeffs[2 + 2 * idx] = sin_coeff

    @staticmethod
    def single_cross_mode(split: CoordSplit, max_frequency: int,
                          amplitude: float) -> "FourierParam":
        """amplitude * sin(x1) * sin(y1): the simplest perturbation violating
        the cross-term-free form the splitting theorem predicts."""
        p = FourierParam(split, max_frequency)
        k_minus = [0] * split.n
        k_minus[0] = 1
        k_minus[split.n1] = -1
        k_plus = [0] * split.n
        k_plus[0] = 1
        k_plus[split.n1] = 1
        # sin a sin b = (cos(a-b) - cos(a+b)) / 2
        p.set_f2_mode(k_minus, cos_coeff=amplitude / 2.0)
        p.set_f2_mode(k_plus, cos_coeff=-amplitude / 2.0)
        return p


@dataclass
class SearchConfig:
    quadrature: int = 5                 # grid points per coordinate
    lambda_mode: str = "trace-averaged"  # or "fixed"
    lambda_fixed: float = 0.0
    max_iters: int = 500
    step_init: float = 1.0
    step_shrink: float = 0.5
    step_grow: float = 2.0
    armijo_c: float = 1e-4
    min_step: float = 1e-14
    gradient_mode: str = "jet"           # or "forward-difference"
    fd_step: float = 1e-6
    tolerance: float = 1e-8

    def validate(self, max_frequency: int) -> None:
        need = 2 * max_frequency + 1
        if self.quadrature < need:
            raise ValueError(
                f"quadrature resolution {self.quadrature} aliases the "
                f"residual: need >= {need}"
            )
        if self.lambda_mode not in ("trace-averaged", "fixed"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.gradient_mode not in ("jet", "forward-difference"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")


@dataclass
class TraceRecord:
    iter: int
    objective: float
    grad_norm: float
    step: float
    split_diag: float


@dataclass
class SearchTrace:
    records: list = field(default_factory=list)
    status: str = ""

    def append(self, rec: TraceRecord) -> None:
        self.records.append(rec)


def quadrature_grid(split: CoordSplit, resolution: int) -> np.ndarray:
    axes = [np.arange(resolution) * (2.0 * math.pi / resolution)] * split.n
    return np.array([pt for pt in _iproduct(*axes)], dtype=float)


class _FlatData:
    """Pointwise data record for the closed-form Ricci blocks on flat torus
    factors; scalar entries may be floats or duals."""

    __slots__ = ("split", "E1", "E2", "a1", "a2", "b1", "b2",
                 "H1f1", "H1f2", "H2f1", "H2f2", "Mx1", "Mx2",
                 "g1", "ig1", "ric1", "g2", "ig2", "ric2")


def _flat_point_data(split, f1_vals, f2_vals):
    """Assemble _FlatData from (value, grad list, hess nested list) triples."""
    n1, n2 = split.n1, split.n2
    f1v, g1v, h1v = f1_vals
    f2v, g2v, h2v = f2_vals
    d = _FlatData()
    d.split = split
    d.E1 = dexp(2.0 * f1v)
    d.E2 = dexp(2.0 * f2v)
    d.a1 = g1v[:n1]
    d.a2 = g1v[n1:]
    d.b1 = g2v[:n1]
    d.b2 = g2v[n1:]
    d.H1f1 = [row[:n1] for row in h1v[:n1]]
    d.H1f2 = [row[:n1] for row in h2v[:n1]]
    d.H2f1 = [row[n1:] for row in h1v[n1:]]
    d.H2f2 = [row[n1:] for row in h2v[n1:]]
    d.Mx1 = [row[n1:] for row in h1v[:n1]]
    d.Mx2 = [row[n1:] for row in h2v[:n1]]
    d.g1 = np.eye(n1)
    d.ig1 = np.eye(n1)
    d.ric1 = np.zeros((n1, n1))
    d.g2 = np.eye(n2)
    d.ig2 = np.eye(n2)
    d.ric2 = np.zeros((n2, n2))
    return d


def _lift_point(B0, B1, B2, coeffs, pad):
    """(value, grad, hess) at one point; with pad=None plain floats, else
    duals whose tangents are the design rows placed into the full parameter
    vector by pad(row)."""
    n = B1.shape[0]
    if pad is None:
        v = float(B0 @ coeffs)
        g = [float(B1[i] @ coeffs) for i in range(n)]
        h = [[float(B2[i, j] @ coeffs) for j in range(n)] for i in range(n)]
    else:
        v = Dual(B0 @ coeffs, pad(B0))
        g = [Dual(B1[i] @ coeffs, pad(B1[i])) for i in range(n)]
        h = [
            [Dual(B2[i, j] @ coeffs, pad(B2[i, j])) for j in range(n)]
            for i in range(n)
        ]
    return v, g, h


class _Evaluator:
    """Caches the quadrature grid design matrices for one search setup."""

    def __init__(self, params: FourierParam, sc: SearchConfig):
        sc.validate(params.max_frequency)
        self.split = params.split
        self.sc = sc
        self.grid = quadrature_grid(params.split, sc.quadrature)
        self.D1 = params.basis1.design(self.grid)
        self.D2 = params.basis2.design(self.grid)
        self.m1 = params.basis1.nparams
        self.m2 = params.basis2.nparams

    def _point_blocks(self, vec, ip, dual: bool):
        c1 = vec[: self.m1]
        c2 = vec[self.m1:]
        m = self.m1 + self.m2
        if dual:
            def pad1(row):
                t = np.zeros(m)
                t[: self.m1] = row
                return t

            def pad2(row):
                t = np.zeros(m)
                t[self.m1:] = row
                return t
        else:
            pad1 = pad2 = None
        f1_vals = _lift_point(
            self.D1[0][ip], self.D1[1][ip], self.D1[2][ip], c1, pad1
        )
        f2_vals = _lift_point(
            self.D2[0][ip], self.D2[1][ip], self.D2[2][ip], c2, pad2
        )
        d = _flat_point_data(self.split, f1_vals, f2_vals)
        E1v, E2v = value_of(d.E1), value_of(d.E2)
        if not (math.isfinite(E1v) and math.isfinite(E2v)):
            raise NumericalAbortError("non-finite conformal factor", vec)
        if not (_SCALE_MIN < E1v < _SCALE_MAX and _SCALE_MIN < E2v < _SCALE_MAX):
            raise MetricDegeneracyError(
                f"conformal scales ({E1v:.3e}, {E2v:.3e}) outside SPD tolerance"
            )
        return d

    def evaluate(self, vec, dual: bool = False):
        """Mean Einstein residual over the grid (float or dual)."""
        split = self.split
        n1, n2, n = split.n1, split.n2, split.n
        P = self.grid.shape[0]
        per_point = []
        lam_acc = 0.0
        for ip in range(P):
            d = self._point_blocks(vec, ip, dual)
            blocks = ricci_blocks(d)
            per_point.append((d, blocks))
            if self.sc.lambda_mode == "trace-averaged":
                lam_acc = lam_acc + scalar_from_blocks(d, blocks) / n
        if self.sc.lambda_mode == "trace-averaged":
            lam = lam_acc / P
        else:
            lam = self.sc.lambda_fixed
        total = 0.0
        for d, (B11, B12, B22) in per_point:
            num = 0.0
            den = 0.0
            for i in range(n1):
                for j in range(n1):
                    gij = d.E1 * d.g1[i][j]
                    r = B11[i][j] - lam * gij
                    num = num + r * r
                    den = den + gij * gij
            for a in range(n2):
                for b in range(n2):
                    gab = d.E2 * d.g2[a][b]
                    r = B22[a][b] - lam * gab
                    num = num + r * r
                    den = den + gab * gab
            for i in range(n1):
                for a in range(n2):
                    r = B12[i][a]
                    num = num + 2.0 * r * r
            total = total + num / den
        obj = total / P
        if not math.isfinite(value_of(obj)):
            raise NumericalAbortError("non-finite objective", vec)
        return obj, lam


def objective(params: FourierParam, sc: SearchConfig) -> float:
    """Mean over the quadrature grid of |Ric - lambda g|_F^2 / |g|_F^2 for
    the closed-form Ricci of the flat-torus conformal product."""
    ev = _Evaluator(params, sc)
    obj, _ = ev.evaluate(params.vector(), dual=False)
    return float(obj)


def gradient(params: FourierParam, sc: SearchConfig,
             ev: Optional[_Evaluator] = None) -> np.ndarray:
    """Gradient of the objective with respect to all Fourier coefficients."""
    ev = ev or _Evaluator(params, sc)
    vec = params.vector()
    if sc.gradient_mode == "jet":
        obj, _ = ev.evaluate(vec, dual=True)
        return obj.tan.copy()
    base, _ = ev.evaluate(vec, dual=False)
    g = np.empty(len(vec))
    for i in range(len(vec)):
        pert = vec.copy()
        pert[i] += sc.fd_step
        val, _ = ev.evaluate(pert, dual=False)
        g[i] = (val - base) / sc.fd_step
    return g


def split_diagnostic(params: FourierParam, grid: Optional[np.ndarray] = None,
                     resolution: Optional[int] = None) -> float:
    """Max over the grid of the Frobenius norm of d1 d2 f2: the quantity the
    splitting theorem predicts to vanish at Einstein configurations."""
    if grid is None:
        res = resolution or (2 * params.max_frequency + 1)
        grid = quadrature_grid(params.split, res)
    split = params.split
    _, _, B2 = params.basis2.design(grid)
    mixed = np.einsum("pijm,m->pij", B2[:, : split.n1, split.n1:, :],
                      params.f2_coeffs)
    return float(np.max(np.sqrt(np.einsum("pij,pij->p", mixed, mixed))))


def minimize(params0: FourierParam, sc: SearchConfig):
    """Gradient descent with Armijo backtracking from params0.

    Returns (params, SearchTrace); stops on objective < tolerance, gradient
    norm < tolerance, a stalled line search, or max_iters.  Accepted steps
    never increase the objective.
    """
    ev = _Evaluator(params0, sc)
    vec = params0.vector()
    obj, _ = ev.evaluate(vec, dual=False)
    obj = float(obj)
    trace = SearchTrace()
    step = sc.step_init
    status = "max_iters"
    for it in range(sc.max_iters + 1):
        if sc.gradient_mode == "jet":
            gdual, _ = ev.evaluate(vec, dual=True)
            grad = gdual.tan
        else:
            grad = gradient(params0.with_vector(vec), sc, ev)
        gnorm = float(np.linalg.norm(grad))
        trace.append(
            TraceRecord(
                iter=it,
                objective=obj,
                grad_norm=gnorm,
                step=step,
                split_diag=split_diagnostic(params0.with_vector(vec)),
            )
        )
        if obj < sc.tolerance:
            status = "objective"
            break
        if gnorm < sc.tolerance:
            status = "gradient"
            break
        if it == sc.max_iters:
            break
        step = min(step * sc.step_grow, sc.step_init)
        accepted = False
        while step >= sc.min_step:
            cand = vec - step * grad
            try:
                cand_obj, _ = ev.evaluate(cand, dual=False)
                cand_obj = float(cand_obj)
            except MetricDegeneracyError:
                step *= sc.step_shrink
                continue
            if cand_obj <= obj - sc.armijo_c * step * gnorm * gnorm:
                vec = cand
                obj = cand_obj
                accepted = True
                break
            step *= sc.step_shrink
        if not accepted:
            status = "stalled"
            break
    trace.status = status
    return params0.with_vector(vec), trace


# ---------------------------------------------------------------------------
# closed-form expression route (for cross-checks against the jet/oracle path)

def fourier_expr(basis: FourierBasis, coeffs: np.ndarray) -> ScalarExpr:
    """The truncated Fourier series as a ScalarExpr over the split."""
    split = basis.split
    out = const(float(coeffs[0]), split)
    for im, k in enumerate(basis.modes):
        phase = None
        for i, ki in enumerate(k):
            if ki == 0:
                continue
            term = float(ki) * coord(i, split)
            phase = term if phase is None else phase + term
        a = float(coeffs[1 + 2 * im])
        b = float(coeffs[2 + 2 * im])
        if a != 0.0:
            out = out + a * call("cos", phase)
        if b != 0.0:
            out = out + b * call("sin", phase)
    return out
