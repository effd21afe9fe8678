"""Residual checkers for the Einstein reductions with a one-dimensional
factor, evaluated pointwise with jets.

With n1 = 1 and t the arc-length coordinate on the first factor (g1 = dt^2,
enforced), the Einstein condition collapses to relations among the
t-derivatives f2', f2'', ... of f2 and leafwise quantities of f1 on the second
factor.  This module evaluates those relations as left-minus-right residuals,
plus the scaling law d2 A = l * A * d2 f1 for the rational combinations A_l of
the t-derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dual import Dual
from .expr import ProductPoint, eval_jet, eval_values
from .product import ConformalProductConfig, PreconditionError, point_data

__all__ = [
    "Case3Config",
    "Case3Residuals",
    "RationalDegreeTerm",
    "TERMS",
    "HypothesisViolationError",
    "OrderUnavailableError",
    "case2_lambda_residual",
    "case3_residuals",
    "kderiv_family_residual",
    "homogeneity_check",
]

# entries whose formulas divide by f2' are reported as not-applicable below
# this threshold (the reductions hold on the open set where f2' != 0)
F2PRIME_EPS = 1e-8

ARC_LENGTH_TOL = 1e-9


class HypothesisViolationError(ValueError):
    pass


class OrderUnavailableError(ValueError):
    pass


@dataclass(frozen=True)
class RationalDegreeTerm:
    """A rational combination of t-derivatives of f2, homogeneous of the
    given degree when each f2^(k) is assigned weight 1."""

    label: str
    degree: int


TERMS = {
    "A2": RationalDegreeTerm("A2", 2),
    "A1": RationalDegreeTerm("A1", 1),
    "A0": RationalDegreeTerm("A0", 0),
    "A-1": RationalDegreeTerm("A-1", -1),
}

# highest t-derivative of f2 appearing in each term
_TERM_MAX_DERIV = {"A2": 2, "A1": 3, "A0": 4, "A-1": 5}


class Case3Config:
    """Conformal product with n1 = 1 (coordinate t := x1) in arc-length gauge,
    f1 free of t, and a candidate Einstein constant."""

    __slots__ = ("cfg", "lam")

    def __init__(self, cfg: ConformalProductConfig, lam: float):
        if cfg.split.n1 != 1:
            raise ValueError("Case 3 requires n1 = 1")
        if cfg.split.n2 < 2:
            raise ValueError("Case 3 requires n2 >= 2")
        if cfg.f1.depends_on_x():
            raise ValueError("f1 must not depend on the t coordinate")
        self.cfg = cfg
        self.lam = float(lam)

    def check_arc_length(self, p: ProductPoint) -> None:
        g11 = float(eval_values(self.cfg.g1.coeffs[0][0], p.full[None, :])[0])
        if abs(g11 - 1.0) > ARC_LENGTH_TOL:
            raise HypothesisViolationError(
                f"g1 = {g11} dt^2 at the point; the reductions assume the "
                "arc-length gauge g1 = dt^2"
            )


def _tderiv(jet, k: int) -> float:
    """k-th pure t-derivative from a jet of a (1, n2)-split expression."""
    return jet.partials[(0,) * k]


def _tyderiv(jet, k: int, a: int) -> float:
    """d_t^k d_{y_a} derivative (global y index is 1 + a)."""
    return jet.partials[tuple(sorted((0,) * k + (1 + a,)))]


def case2_lambda_residual(cfg: ConformalProductConfig, lam: float,
                          p: ProductPoint, d2f1_tol: float = 1e-8) -> float:
    """Residual of the constant-lambda relation for a one-dimensional second
    factor: lam - e^{-2 f1} (Delta_1 f2 - |d1 f2|^2_{g1}) at p.

    Valid where d2 f1 = 0 (checked) with n2 = 1 and n1 > 1.
    """
    if cfg.split.n2 != 1:
        raise ValueError("case 2 requires n2 = 1")
    if cfg.split.n1 <= 1:
        raise ValueError("case 2 requires n1 > 1")
    d = point_data(cfg, p)
    if float(np.max(np.abs(d.a2))) > d2f1_tol:
        raise HypothesisViolationError(
            f"d2 f1 = {d.a2} is not zero at the point"
        )
    lap1_f2 = -float(np.einsum("ij,ij->", d.ig1, d.H1f2))
    grad_sq = float(d.b1 @ d.ig1 @ d.b1)
    return lam - (lap1_f2 - grad_sq) / d.E1


@dataclass
class Case3Residuals:
    """Left minus right of each one-dimensional-base reduction; entries whose
    formula divides by f2' are None where |f2'| < F2PRIME_EPS."""

    deriv22f2: float
    ric11sp: float
    f2deriv: float
    eqlambda: Optional[float]
    f12: float


def case3_residuals(c3: Case3Config, p: ProductPoint) -> Case3Residuals:
    c3.check_arc_length(p)
    cfg = c3.cfg
    lam = c3.lam
    n2 = cfg.split.n2
    d = point_data(cfg, p)
    f2j = eval_jet(cfg.f2, p, 4)
    fp = _tderiv(f2j, 1)
    fpp = _tderiv(f2j, 2)
    f3 = _tderiv(f2j, 3)
    f4 = _tderiv(f2j, 4)
    E1, E2 = d.E1, d.E2

    # d1 d2 f2 = d1 f2 ^ d2 f1 (the mixed Einstein relation for n1 = 1)
    deriv22 = float(
        np.max(np.abs(np.array([_tyderiv(f2j, 1, a) for a in range(n2)]) - fp * d.a2))
    )

    lap2_f1 = -float(np.einsum("ij,ij->", d.ig2, d.H2f1))
    ip_b2a2 = float(d.b2 @ d.ig2 @ d.a2)
    n_a2 = float(d.a2 @ d.ig2 @ d.a2)
    ric11sp = lam * E2 - (
        lap2_f1 + (2 - n2) * ip_b2a2 - n_a2 - n2 * (E2 / E1) * (fpp + fp * fp)
    )

    f2deriv = 2.0 * lam * fp * E2 - (
        (2 - n2) * fp * n_a2 - n2 * (E2 / E1) * (4.0 * fp * fpp + 2.0 * fp**3 + f3)
    )

    if abs(fp) < F2PRIME_EPS:
        eqlam = None
    else:
        eqlam = -4.0 * lam * E1 / n2 - (
            12.0 * fpp + 4.0 * fp**2 + 6.0 * f3 / fp + f4 / fp**2 - fpp * f3 / fp**3
        )

    f12 = fp * fp + lam * E1 / n2

    return Case3Residuals(
        deriv22f2=deriv22, ric11sp=ric11sp, f2deriv=f2deriv, eqlambda=eqlam, f12=f12
    )


def kderiv_family_residual(c3: Case3Config, p: ProductPoint, k: int) -> float:
    """Max over j of |d_{y_j} f2^(k) - f2^(k) d_{y_j} f1| at p, the
    derivative family relation implied by the mixed Einstein equation."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = c3.cfg
    n2 = cfg.split.n2
    f2j = eval_jet(cfg.f2, p, k + 1)
    f1j = eval_jet(cfg.f1, p, 1)
    fk = _tderiv(f2j, k)
    worst = 0.0
    for a in range(n2):
        worst = max(worst, abs(_tyderiv(f2j, k, a) - fk * f1j.d2()[a]))
    return worst


def _term_duals(c3: Case3Config, p: ProductPoint, kmax: int):
    """u_k = Dual(f2^(k), d2 f2^(k)) for k = 1..kmax; tangents are the
    transverse y-gradients."""
    cfg = c3.cfg
    n2 = cfg.split.n2
    f2j = eval_jet(cfg.f2, p, kmax + 1)
    return [
        Dual(_tderiv(f2j, k), [_tyderiv(f2j, k, a) for a in range(n2)])
        for k in range(1, kmax + 1)
    ]


def term_value(term: RationalDegreeTerm, u):
    """Evaluate A_l from the t-derivatives u = [f2', f2'', ...]; works on
    floats or duals."""
    if term.label == "A2":
        return 8.0 * u[0] * u[1]
    if term.label == "A1":
        return 12.0 * u[2]
    if term.label == "A0":
        return 6.0 * u[3] / u[0] - 6.0 * u[1] * u[2] / u[0] ** 2
    if term.label == "A-1":
        return (
            u[4] / u[0] ** 2
            - 3.0 * u[1] * u[3] / u[0] ** 3
            - u[2] ** 2 / u[0] ** 3
            + 3.0 * u[1] ** 2 * u[2] / u[0] ** 4
        )
    raise ValueError(f"unknown term {term.label}")


def homogeneity_check(c3: Case3Config, p: ProductPoint, term: RationalDegreeTerm,
                      t_order_cap: int = 4, kderiv_tol: float = 1e-8) -> float:
    """Max over j of |d_{y_j} A_l - l * A_l * d_{y_j} f1| at p.

    Requires the derivative family relation to hold at p (k = 1..4, checked)
    and f2' != 0; the degree -1 term needs t-derivatives of order 5 and is
    gated on t_order_cap.
    """
    kmax = _TERM_MAX_DERIV[term.label]
    if kmax > t_order_cap:
        raise OrderUnavailableError(
            f"{term.label} needs f2 t-derivatives of order {kmax}; cap is "
            f"{t_order_cap}"
        )
    for k in range(1, 5):
        r = kderiv_family_residual(c3, p, k)
        if r > kderiv_tol:
            raise PreconditionError(
                "kderiv",
                f"derivative family relation fails at k={k} (residual {r:.3e})",
            )
    u = _term_duals(c3, p, kmax)
    if abs(u[0].val) < F2PRIME_EPS:
        raise PreconditionError("f2prime", "f2' vanishes at the point")
    A = term_value(term, u)
    f1j = eval_jet(c3.cfg.f1, p, 1)
    resid = A.tan - term.degree * A.val * f1j.d2()
    return float(np.max(np.abs(resid)))
