"""Block-structured pointwise tensor values relative to a split coordinate
chart: vectors, one-forms, symmetric bilinear forms and 4-index curvature
tensors, with the musical isomorphisms and inner products for a given metric
value.  Pure value types; every operation is a pure function."""

from __future__ import annotations

import numpy as np
from scipy.linalg import ldl

from .expr import CoordSplit

__all__ = [
    "SingularMetricError",
    "BlockVector",
    "OneFormValue",
    "Sym2Value",
    "Riemann4Value",
    "sharp",
    "flat",
    "form_inner",
    "curvature_eval",
    "rel_residual",
]

# smallest pivot must exceed this fraction of the largest one
SPD_PIVOT_RATIO = 1e-12


class SingularMetricError(ValueError):
    pass


class BlockVector:
    """Tangent vector with components split along the two factors."""

    __slots__ = ("v1", "v2")

    def __init__(self, v1, v2):
        self.v1 = np.atleast_1d(np.asarray(v1, dtype=float))
        self.v2 = np.atleast_1d(np.asarray(v2, dtype=float))

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.v1, self.v2])

    @staticmethod
    def from_full(v, split: CoordSplit) -> "BlockVector":
        v = np.asarray(v, dtype=float)
        return BlockVector(v[: split.n1], v[split.n1:])

    @staticmethod
    def basis(i: int, split: CoordSplit) -> "BlockVector":
        e = np.zeros(split.n)
        e[i] = 1.0
        return BlockVector.from_full(e, split)

    def __repr__(self):
        return f"BlockVector({list(self.v1)}, {list(self.v2)})"


class OneFormValue:
    """Covector with components split along the two factors."""

    __slots__ = ("w1", "w2")

    def __init__(self, w1, w2):
        self.w1 = np.atleast_1d(np.asarray(w1, dtype=float))
        self.w2 = np.atleast_1d(np.asarray(w2, dtype=float))

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2])

    @staticmethod
    def from_full(w, split: CoordSplit) -> "OneFormValue":
        w = np.asarray(w, dtype=float)
        return OneFormValue(w[: split.n1], w[split.n1:])

    def __call__(self, X: BlockVector) -> float:
        return float(self.w1 @ X.v1 + self.w2 @ X.v2)

    def __repr__(self):
        return f"OneFormValue({list(self.w1)}, {list(self.w2)})"


def _spd_pivots(mat: np.ndarray) -> np.ndarray:
    """Pivots of the Bunch-Kaufman factorization (eigenvalues of the 1x1/2x2
    diagonal blocks)."""
    _, d, _ = ldl(mat)
    pivots = []
    k = 0
    m = d.shape[0]
    while k < m:
        if k + 1 < m and abs(d[k + 1, k]) > 0:
            pivots.extend(np.linalg.eigvalsh(d[k:k + 2, k:k + 2]))
            k += 2
        else:
            pivots.append(d[k, k])
            k += 1
    return np.asarray(pivots, dtype=float)


class Sym2Value:
    """Symmetric bilinear form value on the product chart (e.g. metric, Ricci,
    Hessian values) with block decomposition B11/B12/B22."""

    __slots__ = ("split", "mat")

    def __init__(self, mat, split: CoordSplit, require_spd: bool = False,
                 sym_tol: float = 1e-8):
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (split.n, split.n):
            raise ValueError("matrix shape does not match split")
        skew = np.max(np.abs(mat - mat.T))
        scale = max(1.0, np.max(np.abs(mat)))
        if skew > sym_tol * scale:
            raise ValueError(f"matrix not symmetric (max skew {skew})")
        self.split = split
        self.mat = 0.5 * (mat + mat.T)
        if require_spd and not self.is_spd():
            raise SingularMetricError("matrix is not positive definite")

    def is_spd(self, pivot_ratio: float = SPD_PIVOT_RATIO) -> bool:
        piv = _spd_pivots(self.mat)
        return bool(np.min(piv) > pivot_ratio * np.max(np.abs(piv)))

    @property
    def B11(self) -> np.ndarray:
        n1 = self.split.n1
        return self.mat[:n1, :n1]

    @property
    def B12(self) -> np.ndarray:
        n1 = self.split.n1
        return self.mat[:n1, n1:]

    @property
    def B22(self) -> np.ndarray:
        n1 = self.split.n1
        return self.mat[n1:, n1:]

    def __call__(self, X: BlockVector, Y: BlockVector) -> float:
        return float(X.full @ self.mat @ Y.full)

    def inv(self) -> np.ndarray:
        try:
            return np.linalg.inv(self.mat)
        except np.linalg.LinAlgError as e:
            raise SingularMetricError(str(e)) from e

    def __repr__(self):
        return f"Sym2Value({self.mat!r})"


class Riemann4Value:
    """Fully covariant curvature value R_{ijkl} = g(R(e_i, e_j) e_k, e_l).

    Sign convention: the round unit sphere has R(X, Y, Y, X) > 0.
    """

    __slots__ = ("split", "components")

    def __init__(self, components, split: CoordSplit):
        components = np.asarray(components, dtype=float)
        n = split.n
        if components.shape != (n, n, n, n):
            raise ValueError("component array shape does not match split")
        self.split = split
        self.components = components

    def symmetry_violations(self) -> dict:
        """Max absolute violation of each curvature symmetry, for tests."""
        R = self.components
        return {
            "antisym_12": float(np.max(np.abs(R + R.transpose(1, 0, 2, 3)))),
            "antisym_34": float(np.max(np.abs(R + R.transpose(0, 1, 3, 2)))),
            "pair": float(np.max(np.abs(R - R.transpose(2, 3, 0, 1)))),
            "bianchi": float(
                np.max(np.abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)))
            ),
        }

    def __repr__(self):
        return f"Riemann4Value(n={self.split.n})"


def sharp(w: OneFormValue, g: Sym2Value) -> BlockVector:
    """Raise the index: the vector with g(sharp(w), Z) = w(Z) for all Z."""
    try:
        v = np.linalg.solve(g.mat, w.full)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(str(e)) from e
    return BlockVector.from_full(v, g.split)


def flat(X: BlockVector, g: Sym2Value) -> OneFormValue:
    """Lower the index: the one-form g(X, .)."""
    return OneFormValue.from_full(g.mat @ X.full, g.split)


def form_inner(w: OneFormValue, eta: OneFormValue, g: Sym2Value) -> float:
    """Inner product of one-forms with respect to g: w^T g^{-1} eta."""
    try:
        return float(w.full @ np.linalg.solve(g.mat, eta.full))
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(str(e)) from e


def curvature_eval(R: Riemann4Value, X: BlockVector, Y: BlockVector,
                   Z: BlockVector, W: BlockVector) -> float:
    """Multilinear contraction R(X, Y, Z, W)."""
    return float(
        np.einsum("ijkl,i,j,k,l->", R.components, X.full, Y.full, Z.full, W.full)
    )


def rel_residual(a, b, floor: float = 1e-10, rel: float = 1e-8) -> float:
    """Entrywise relative deviation with an absolute floor.

    Returns max |a-b| / max(|a|, |b|, floor/rel); comparing the result
    against `rel` enforces |a-b| <= max(floor, rel*scale) entrywise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor / rel)
    return float(np.max(np.abs(a - b) / denom))
