import numpy as np
import pytest

from confprod.expr import CoordSplit, ProductPoint, parse
from confprod.oracle import riemann_oracle
from confprod.tensors import (
    BlockVector,
    OneFormValue,
    Riemann4Value,
    SingularMetricError,
    Sym2Value,
    curvature_eval,
    flat,
    form_inner,
    rel_residual,
    sharp,
)
from conftest import mk_metric

SP = CoordSplit(2, 2)


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


def test_sharp_zero_and_euclidean():
    g = Sym2Value(np.eye(4), SP, require_spd=True)
    z = sharp(OneFormValue([0, 0], [0, 0]), g)
    assert np.all(z.full == 0.0)
    v = sharp(OneFormValue([1, 2], [3, 4]), g)
    assert v.full.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_sharp_solves_metric_equation(rng):
    for _ in range(10):
        g = Sym2Value(random_spd(rng, 4), SP, require_spd=True)
        w = OneFormValue(rng.normal(size=2), rng.normal(size=2))
        v = sharp(w, g)
        assert np.max(np.abs(g.mat @ v.full - w.full)) < 1e-12


def test_sharp_then_flat_is_identity(rng):
    for _ in range(10):
        g = Sym2Value(random_spd(rng, 4), SP, require_spd=True)
        w = OneFormValue(rng.normal(size=2), rng.normal(size=2))
        back = flat(sharp(w, g), g)
        assert np.max(np.abs(back.full - w.full)) < 1e-12


def test_form_inner_diagonal():
    g = Sym2Value(np.diag([4.0, 1.0, 1.0, 1.0]), SP, require_spd=True)
    dx1 = OneFormValue([1, 0], [0, 0])
    assert form_inner(dx1, dx1, g) == pytest.approx(0.25)


def test_form_inner_block_orthogonality(rng):
    m = np.zeros((4, 4))
    m[:2, :2] = random_spd(rng, 2)
    m[2:, 2:] = random_spd(rng, 2)
    g = Sym2Value(m, SP, require_spd=True)
    w = OneFormValue(rng.normal(size=2), [0, 0])
    eta = OneFormValue([0, 0], rng.normal(size=2))
    assert abs(form_inner(w, eta, g)) < 1e-14


def test_form_inner_symmetric_positive(rng):
    for _ in range(10):
        g = Sym2Value(random_spd(rng, 4), SP, require_spd=True)
        w = OneFormValue(rng.normal(size=2), rng.normal(size=2))
        eta = OneFormValue(rng.normal(size=2), rng.normal(size=2))
        assert form_inner(w, eta, g) == pytest.approx(form_inner(eta, w, g), rel=1e-12)
        assert form_inner(w, w, g) > 0.0


def test_conformal_scaling_law(rng):
    """|d1 f1|^2 with respect to e^{2 f1} g1 + e^{2 f2} g2 equals
    e^{-2 f1} |d1 f1|^2_{g1}."""
    split = CoordSplit(2, 1)
    g1m = random_spd(rng, 2)
    f1v = 0.37
    m = np.zeros((3, 3))
    m[:2, :2] = np.exp(2 * f1v) * g1m
    m[2, 2] = np.exp(2 * 0.11) * 1.7
    g = Sym2Value(m, split, require_spd=True)
    w = OneFormValue(rng.normal(size=2), [0.0])
    lhs = form_inner(w, w, g)
    rhs = np.exp(-2 * f1v) * float(w.w1 @ np.linalg.solve(g1m, w.w1))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_singular_metric_rejected():
    m = np.eye(4)
    m[3, 3] = 0.0
    with pytest.raises(SingularMetricError):
        Sym2Value(m, SP, require_spd=True)
    assert not Sym2Value(m, SP).is_spd()


def test_asymmetric_matrix_rejected():
    m = np.eye(4)
    m[0, 1] = 0.5
    with pytest.raises(ValueError):
        Sym2Value(m, SP)


def test_curvature_eval_antisymmetry(rng):
    sp = CoordSplit(1, 1)
    M = mk_metric(sp, [["1", "0"], ["0", "sin(x1)^2"]])
    R = riemann_oracle(M, ProductPoint([1.1], [0.3]))
    X = BlockVector(rng.normal(size=1), rng.normal(size=1))
    Y = BlockVector(rng.normal(size=1), rng.normal(size=1))
    assert abs(curvature_eval(R, X, X, Y, X)) < 1e-14
    assert curvature_eval(R, X, Y, Y, X) == pytest.approx(
        -curvature_eval(R, Y, X, Y, X), rel=1e-12
    )


def test_flat_metric_curvature_zero():
    sp = CoordSplit(1, 1)
    M = mk_metric(sp, [["1", "0"], ["0", "1"]])
    R = riemann_oracle(M, ProductPoint([0.4], [0.9]))
    assert np.max(np.abs(R.components)) == 0.0


def test_sphere_sectional_curvature_one(rng):
    sp = CoordSplit(1, 1)
    M = mk_metric(sp, [["1", "0"], ["0", "sin(x1)^2"]])
    p = ProductPoint([np.pi / 3], [0.7])
    R = riemann_oracle(M, p)
    g = M.value(p)
    # orthonormalize a random pair with respect to g
    a = rng.normal(size=2)
    b = rng.normal(size=2)
    a = a / np.sqrt(a @ g @ a)
    b = b - (a @ g @ b) * a
    b = b / np.sqrt(b @ g @ b)
    X = BlockVector.from_full(a, sp)
    Y = BlockVector.from_full(b, sp)
    assert curvature_eval(R, X, Y, Y, X) == pytest.approx(1.0, abs=1e-9)


def test_riemann_symmetry_suite():
    sp = CoordSplit(1, 1)
    M = mk_metric(sp, [["1", "0"], ["0", "sin(x1)^2"]])
    R = riemann_oracle(M, ProductPoint([1.0], [0.2]))
    assert max(R.symmetry_violations().values()) < 1e-9


def test_rel_residual_floor():
    assert rel_residual(np.array([0.0]), np.array([5e-11])) < 1e-8
    assert rel_residual(np.array([1.0]), np.array([1.0 + 1e-7])) > 1e-8
    assert rel_residual(np.array([1.0]), np.array([1.0 + 1e-10])) < 1e-8
