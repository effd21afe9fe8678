import math
from itertools import product as iproduct

import numpy as np
import pytest

from confprod.expr import CoordSplit, ProductPoint, eval_jet, parse, to_text
from confprod.oracle import christoffel, ricci_oracle, riemann_oracle
from confprod.product import (
    ConformalProductConfig,
    EinsteinConstant,
    NotDecomposableError,
    PreconditionError,
    assemble_metric,
    conformal_rescale,
    decompose_sum,
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
    adapted_reducibility_residual,
)
from confprod.tensors import BlockVector, rel_residual
from conftest import flat_config, mk_config, mk_metric, random_config, random_points

DIMS = [(1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (2, 3)]


def product_grid(split, per_axis=9, lo=0.0, hi=2 * math.pi):
    axes = [np.linspace(lo, hi, per_axis, endpoint=False)] * split.n
    return np.array([p for p in iproduct(*axes)])


# ---------------------------------------------------------------------------
# assembly and constructor validation

def test_assemble_zero_factors_is_plain_product():
    cfg = mk_config(1, 2, [["1.5"]], [["2", "0"], ["0", "1"]], "0", "0")
    g = assemble_metric(cfg).value(ProductPoint([0.3], [1.0, 2.0]))
    assert np.allclose(g, np.diag([1.5, 2.0, 1.0]))


def test_assemble_warped_expression():
    cfg = flat_config(1, 2, "0", "sin(x1)")
    p = ProductPoint([0.7], [0.1, 0.2])
    g = assemble_metric(cfg).value(p)
    w = math.exp(2 * math.sin(0.7))
    assert np.allclose(g, np.diag([1.0, w, w]))


def test_config_rejects_wrong_factor_dependence():
    split = CoordSplit(1, 1)
    with pytest.raises(ValueError):
        ConformalProductConfig(
            split, mk_metric(split, [["1+0.1*sin(y1)"]]), mk_metric(split, [["1"]]),
            parse("0", split), parse("0", split),
        )
    with pytest.raises(ValueError):
        ConformalProductConfig(
            split, mk_metric(split, [["1"]]), mk_metric(split, [["1+0.1*sin(x1)"]]),
            parse("0", split), parse("0", split),
        )


# ---------------------------------------------------------------------------
# the master property: closed forms match the oracle

@pytest.mark.parametrize("n1,n2", DIMS)
def test_oracle_equivalence(rng, n1, n2):
    for k in range(8):
        cfg = random_config(9000 + 100 * n1 + 10 * n2 + k, n1, n2)
        asm = assemble_metric(cfg)
        for p in random_points(rng, cfg.split, 10):
            assert rel_residual(ricci_cp(cfg, p).mat,
                                ricci_oracle(asm, p).mat) < 1e-8
            assert rel_residual(riemann_cp(cfg, p).components,
                                riemann_oracle(asm, p).components) < 1e-8


def test_product_reduction(rng):
    cfg = random_config(555, 2, 2)
    cfg0 = ConformalProductConfig(cfg.split, cfg.g1, cfg.g2,
                                  parse("0", cfg.split), parse("0", cfg.split))
    for p in random_points(rng, cfg.split, 5):
        R = riemann_cp(cfg0, p).components
        assert np.max(np.abs(R[:2, 2:, :, :])) < 1e-13
        ric = ricci_cp(cfg0, p)
        assert np.max(np.abs(ric.B12)) < 1e-13


def test_oracle_filled_classes_by_dimension():
    assert oracle_filled_classes(CoordSplit(1, 2)) == []
    assert oracle_filled_classes(CoordSplit(3, 1)) == []
    assert oracle_filled_classes(CoordSplit(2, 2)) == ["1122", "1212_antisym"]


def test_closed_form_classes_without_oracle_fill(rng):
    """The five stated component classes agree with the oracle directly (no
    cross-fill happens when one factor is a curve)."""
    cfg = random_config(4242, 1, 3)
    asm = assemble_metric(cfg)
    for p in random_points(rng, cfg.split, 5):
        Rc = riemann_cp(cfg, p).components
        Ro = riemann_oracle(asm, p).components
        assert rel_residual(Rc, Ro) < 1e-8


# ---------------------------------------------------------------------------
# Lee form and Weyl connection

def test_lee_form_constant_factors_vanishes():
    cfg = flat_config(1, 1, "0.7", "-0.3")
    th = lee_form(cfg, ProductPoint([0.1], [0.5]))
    assert np.all(th.full == 0.0)


def test_lee_form_blocks():
    cfg = flat_config(1, 1, "cos(y1)", "sin(x1)")
    p = ProductPoint([0.8], [1.4])
    th = lee_form(cfg, p)
    assert th.w1[0] == pytest.approx(-math.cos(0.8), rel=1e-14)
    assert th.w2[0] == pytest.approx(math.sin(1.4), rel=1e-14)


def test_lee_form_restriction_for_y_only_f1(rng):
    cfg = flat_config(2, 2, "0.4*sin(y1)+0.2*cos(y2)", "0.1*sin(x1)")
    for p in random_points(rng, cfg.split, 5):
        th = lee_form(cfg, p)
        d2f1 = eval_jet(cfg.f1, p, 1).d2()
        assert np.allclose(th.w2, -d2f1, atol=1e-14)


def test_lee_gauge_rule(rng):
    cfg = random_config(31, 2, 2)
    phi = parse("0.2*sin(x1+0.3)*cos(y2)+0.1*cos(y1)", cfg.split)
    cfg2 = conformal_rescale(cfg, phi)
    for p in random_points(rng, cfg.split, 10):
        th = lee_form(cfg, p).full
        th2 = lee_form(cfg2, p).full
        dphi = eval_jet(phi, p, 1).gradient()
        assert np.max(np.abs(th2 - (th - dphi))) < 1e-10


def test_weyl_compatibility_exact_case(rng):
    cfg = flat_config(1, 2, "0.5", "0.25")  # constants: theta = 0
    p = random_points(rng, cfg.split, 1)[0]
    X = BlockVector(rng.normal(size=1), rng.normal(size=2))
    Y = BlockVector(rng.normal(size=1), rng.normal(size=2))
    assert weyl_compatibility_residual(cfg, p, X, Y) < 1e-14


def test_weyl_compatibility_random_configs(rng):
    for seed, (n1, n2) in enumerate(DIMS * 3):
        cfg = random_config(7100 + seed, n1, n2)
        p = random_points(rng, cfg.split, 1)[0]
        X = BlockVector(rng.normal(size=n1), rng.normal(size=n2))
        Y = BlockVector(rng.normal(size=n1), rng.normal(size=n2))
        assert weyl_compatibility_residual(cfg, p, X, Y) < 1e-9


def test_adapted_reducibility(rng):
    for seed, (n1, n2) in enumerate(DIMS):
        cfg = random_config(7500 + seed, n1, n2)
        p = random_points(rng, cfg.split, 1)[0]
        for i in range(n1):
            for a in range(n2):
                X1 = BlockVector.basis(i, cfg.split)
                X2 = BlockVector.basis(n1 + a, cfg.split)
                assert adapted_reducibility_residual(cfg, p, X1, X2) < 1e-10


# ---------------------------------------------------------------------------
# connection closed forms

def test_lc_product_zero_factors_gives_block_christoffels(rng):
    cfg = random_config(88, 2, 2)
    cfg0 = ConformalProductConfig(cfg.split, cfg.g1, cfg.g2,
                                  parse("0", cfg.split), parse("0", cfg.split))
    p = random_points(rng, cfg.split, 1)[0]
    gamma = christoffel(assemble_metric(cfg0), p)
    lc = lc_product(cfg0, p, "11")
    for i in range(2):
        for j in range(2):
            assert np.allclose(lc[i, j], gamma[:, i, j], atol=1e-12)
    assert np.max(np.abs(lc_product(cfg0, p, "12"))) < 1e-14


def test_lc_product_mixed_formula_flat(rng):
    cfg = flat_config(1, 2, "0.3*cos(y1)", "0.2*sin(x1)+0.1*cos(y2)")
    p = random_points(rng, cfg.split, 1)[0]
    f1j = eval_jet(cfg.f1, p, 1)
    f2j = eval_jet(cfg.f2, p, 1)
    lc = lc_product(cfg, p, "12")
    for i in range(1):
        for a in range(2):
            expected = np.zeros(3)
            expected[1 + a] += f2j.d1()[i]
            expected[i] += f1j.d2()[a]
            assert np.allclose(lc[i, a], expected, atol=1e-14)


def test_lc_product_matches_oracle_blocks(rng):
    for seed, (n1, n2) in enumerate(DIMS * 2):
        cfg = random_config(7700 + seed, n1, n2)
        p = random_points(rng, cfg.split, 1)[0]
        gamma = christoffel(assemble_metric(cfg), p)
        n = cfg.split.n
        for which, r1, r2 in (("11", range(n1), range(n1)),
                              ("22", range(n1, n), range(n1, n)),
                              ("12", range(n1), range(n1, n))):
            lc = lc_product(cfg, p, which)
            for ii, i in enumerate(r1):
                for jj, j in enumerate(r2):
                    scale = max(1.0, np.max(np.abs(gamma[:, i, j])))
                    assert np.max(np.abs(lc[ii, jj] - gamma[:, i, j])) < 1e-9 * scale


def test_connLC11(rng):
    for seed, (n1, n2) in enumerate(DIMS * 2):
        cfg = random_config(7900 + seed, n1, n2)
        p = random_points(rng, cfg.split, 1)[0]
        g = assemble_metric(cfg).value(p)
        lc11 = lc_product(cfg, p, "11")
        d2f1 = eval_jet(cfg.f1, p, 1).d2()
        for i in range(n1):
            for j in range(n1):
                v = g @ lc11[i, j]
                for a in range(n2):
                    assert abs(v[n1 + a] + g[i, j] * d2f1[a]) < 1e-10


# ---------------------------------------------------------------------------
# Einstein residuals

def test_einstein_flat_product(rng):
    cfg = flat_config(1, 2)
    pts = random_points(rng, cfg.split, 5)
    resid, lam = einstein_residual(cfg, pts, EinsteinConstant.given(0.0))
    assert resid == 0.0 and lam == 0.0


def test_einstein_sphere_product(rng):
    cfg = mk_config(2, 2, [["1", "0"], ["0", "sin(x1)^2"]],
                    [["1", "0"], ["0", "sin(y1)^2"]], "0", "0")
    pts = random_points(rng, cfg.split, 6, lo=0.4, hi=2.7)
    resid, _ = einstein_residual(cfg, pts, EinsteinConstant.given(1.0))
    assert resid < 1e-9
    resid2, lam2 = einstein_residual(cfg, pts, EinsteinConstant.trace_estimated())
    assert resid2 < 1e-9 and lam2 == pytest.approx(1.0, abs=1e-12)


def test_einstein_hyperbolic_warped(rng):
    cfg = flat_config(1, 2, "0", "x1")
    pts = random_points(rng, cfg.split, 6, lo=0.3, hi=2.8)
    resid, _ = einstein_residual(cfg, pts, EinsteinConstant.given(-2.0))
    assert resid < 1e-12


def test_einstein_perturbed_fails(rng):
    cfg = flat_config(1, 2, "0", "0.1*sin(x1)")
    pts = random_points(rng, cfg.split, 6)
    resid, _ = einstein_residual(cfg, pts, EinsteinConstant.trace_estimated())
    assert resid > 1e-3


def test_einstein1_trivial_sum_form(rng):
    # f2 a sum of single-factor functions, f1 with d2 f1 = 0: both sides vanish
    cfg = flat_config(1, 2, "0.3", "0.2*sin(x1)+0.1*cos(y2)")
    for p in random_points(rng, cfg.split, 5):
        assert np.max(np.abs(einstein1_residual(cfg, p))) < 1e-14


def test_einstein1_hand_value():
    # n = 3, n2 = 2: entry = 1*cos(x1)*(-sin(y1)) - 1*0
    cfg = flat_config(1, 2, "cos(y1)", "sin(x1)")
    p = ProductPoint([0.6], [1.1, 0.4])
    r = einstein1_residual(cfg, p)
    assert r[0, 0] == pytest.approx(-math.cos(0.6) * math.sin(1.1), rel=1e-12)
    assert r[0, 1] == pytest.approx(0.0, abs=1e-14)


def test_einstein_implies_einstein1(rng):
    """Einstein + d1 f1 = 0 forces the mixed relation."""
    for cfg, lam in [
        (flat_config(1, 2, "0", "x1"), -2.0),
        (flat_config(1, 2), 0.0),
        (mk_config(2, 2, [["1", "0"], ["0", "sin(x1)^2"]],
                   [["1", "0"], ["0", "sin(y1)^2"]], "0", "0"), 1.0),
    ]:
        pts = random_points(rng, cfg.split, 5, lo=0.4, hi=2.7)
        resid, _ = einstein_residual(cfg, pts, EinsteinConstant.given(lam))
        assert resid < 1e-8
        for p in pts:
            assert np.max(np.abs(einstein1_residual(cfg, p))) < 1e-6


# ---------------------------------------------------------------------------
# hypothesis check, decomposition, splitting

def test_hypothesis_check_cases(rng):
    pts = random_points(rng, CoordSplit(1, 2), 10)
    rep = hypothesis_check(flat_config(1, 2, "0.4*sin(y1)", "0"), pts)
    assert rep.d1f1_max == 0.0 and rep.equivalent_normal_form

    rep = hypothesis_check(flat_config(1, 2, "0.3*sin(x1)+0.2*cos(y1)", "0"), pts)
    assert rep.d1f1_max > 0.0 and rep.d1d2f1_max < 1e-12 and rep.equivalent_normal_form

    rep = hypothesis_check(flat_config(1, 2, "sin(x1)*cos(y1)", "0"), pts)
    assert not rep.equivalent_normal_form


def test_decompose_sum_separated(rng):
    split = CoordSplit(1, 1)
    f = parse("sin(x1)+cos(y1)", split)
    grid = product_grid(split, 16)
    dec = decompose_sum(f, ProductPoint([0.0], [0.0]), grid)
    assert dec.residual < 1e-12
    assert not dec.a1.depends_on_y() and not dec.a2.depends_on_x()


def test_decompose_sum_rejects_cross_term(rng):
    split = CoordSplit(1, 1)
    f = parse("x1*y1", split)
    with pytest.raises(NotDecomposableError):
        decompose_sum(f, ProductPoint([0.0], [0.0]), product_grid(split, 8))


def test_decompose_sum_any_basepoint(rng):
    split = CoordSplit(1, 1)
    f = parse("(x1+1)^2+exp(y1)", split)
    grid = product_grid(split, 32, lo=0.0, hi=2.0)
    for _ in range(3):
        bp = ProductPoint(rng.uniform(0, 2, 1), rng.uniform(0, 2, 1))
        dec = decompose_sum(f, bp, grid)
        assert dec.residual < 1e-12


def test_theorem_split_trivial(rng):
    cfg = flat_config(1, 2)
    grid = product_grid(cfg.split, 7)
    res = theorem_split(cfg, ProductPoint([0.0], [0.0, 0.0]), grid)
    assert res.conformality_residual == 0.0
    assert not res.regauged


def test_theorem_split_sum_f2(rng):
    cfg = flat_config(1, 2, "0.4*cos(y1)", "0.3*sin(x1)+0.1*(y2+1)^2")
    grid = product_grid(cfg.split, 9)
    res = theorem_split(cfg, ProductPoint([1.0], [1.0, 1.0]), grid)
    assert res.conformality_residual < 1e-10
    # h1 depends only on x, h2 only on y
    for row in res.h1.coeffs:
        assert all(not e.depends_on_y() for e in row)
    for row in res.h2.coeffs:
        assert all(not e.depends_on_x() for e in row)


def test_theorem_split_cross_f2_rejected(rng):
    cfg = flat_config(1, 2, "0", "sin(x1)*cos(y1)")
    with pytest.raises(PreconditionError) as exc:
        theorem_split(cfg, ProductPoint([0.0], [0.0, 0.0]), product_grid(cfg.split, 7))
    assert exc.value.which == "d1d2f2"


def test_theorem_split_cross_f1_rejected(rng):
    cfg = flat_config(1, 2, "sin(x1)*cos(y1)", "0")
    with pytest.raises(PreconditionError) as exc:
        theorem_split(cfg, ProductPoint([0.0], [0.0, 0.0]), product_grid(cfg.split, 7))
    assert exc.value.which == "d1d2f1"


def test_theorem_split_gauge_covariance(rng):
    """Splitting the config and its re-gauged form (f1 -> a2, g1 -> e^{2 a1} g1)
    produces the same assembled metric, hence conformally identical splits."""
    split = CoordSplit(1, 2)
    cfg = flat_config(1, 2, "0.3*sin(x1)+0.2*cos(y1)", "0.1*sin(x1)+0.2*cos(y2)")
    a1 = parse("0.3*sin(x1)", split)
    a2 = parse("0.2*cos(y1)", split)
    from confprod.expr import call
    g1_scaled = mk_metric(split, [["1"]])
    g1_scaled = type(g1_scaled)(
        [[call("exp", 2.0 * a1) * g1_scaled.coeffs[0][0]]], split
    )
    cfg_regauged = ConformalProductConfig(split, g1_scaled, cfg.g2, a2, cfg.f2)
    grid = product_grid(split, 7)
    res_a = theorem_split(cfg, ProductPoint([0.5], [0.5, 0.5]), grid)
    res_b = theorem_split(cfg_regauged, ProductPoint([0.5], [0.5, 0.5]), grid)
    assert res_a.regauged and not res_b.regauged
    # the recombined metrics agree pointwise (ratio = identity)
    ga = assemble_metric(cfg).values(grid)
    gb = assemble_metric(cfg_regauged).values(grid)
    assert np.max(np.abs(ga - gb)) < 1e-10
    assert res_a.conformality_residual < 1e-10
    assert res_b.conformality_residual < 1e-10


def test_split_serialized_expressions_reproduce_values(rng):
    cfg = flat_config(1, 2, "0.2*cos(y1)", "0.3*sin(x1)+0.1*cos(y2)")
    grid = product_grid(cfg.split, 6)
    res = theorem_split(cfg, ProductPoint([0.4], [0.8, 1.2]), grid)
    # printing and reparsing the split data preserves it
    sigma2 = parse(to_text(res.sigma), cfg.split)
    p = random_points(rng, cfg.split, 1)[0]
    from confprod.expr import eval_value
    assert eval_value(res.sigma, p) == pytest.approx(eval_value(sigma2, p), rel=1e-14)
