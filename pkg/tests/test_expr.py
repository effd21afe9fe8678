import math

import numpy as np
import pytest

from confprod.expr import (
    CoordSplit,
    CoordIndexError,
    EvalDomainError,
    ExprSyntaxError,
    ProductPoint,
    UnknownIdentifierError,
    eval_jet,
    eval_value,
    eval_values,
    mixed_d1d2,
    parse,
    split_differential,
    to_text,
)
from conftest import dual2_mixed, fd_partial, random_expr_text


SP11 = CoordSplit(1, 1)
SP12 = CoordSplit(1, 2)


def jets_equal(e1, e2, pts, order=3, tol=1e-12):
    for p in pts:
        j1 = eval_jet(e1, p, order).partials
        j2 = eval_jet(e2, p, order).partials
        scale = max(1.0, max(abs(v) for v in j1.values()))
        if max(abs(j1[k] - j2[k]) for k in j1) > tol * scale:
            return False
    return True


# ---------------------------------------------------------------------------
# parsing

def test_parse_basic():
    e = parse("sin(x1)+cos(y1)", SP11)
    assert eval_value(e, ProductPoint([0.0], [0.0])) == 1.0


def test_parse_coordinate_out_of_range():
    with pytest.raises(CoordIndexError):
        parse("x3", CoordSplit(2, 2))
    with pytest.raises(CoordIndexError):
        parse("y4", CoordSplit(2, 3))


def test_parse_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("tan(x1)", SP11)


def test_parse_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("sin(x1", SP11)
    assert exc.value.offset == 6
    with pytest.raises(ExprSyntaxError):
        parse("x1^2.5", SP11)


def test_parse_negative_power_and_division():
    assert eval_value(parse("y1^-2", SP11), ProductPoint([0.0], [2.0])) == 0.25
    assert eval_value(parse("1/y1^2", SP11), ProductPoint([0.0], [2.0])) == 0.25


def test_print_reparse_roundtrip(rng):
    e = parse("exp(2*y1)*(1+0.5*sin(x1))", SP12)
    e2 = parse(to_text(e), SP12)
    pts = [ProductPoint(rng.uniform(0, 6, 1), rng.uniform(0, 6, 2)) for _ in range(10)]
    assert jets_equal(e, e2, pts)


def test_print_reparse_random(rng):
    for k in range(40):
        split = CoordSplit(int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        text = random_expr_text(rng, split)
        e = parse(text, split)
        e2 = parse(to_text(e), split)
        pts = [
            ProductPoint(rng.uniform(0, 6, split.n1), rng.uniform(0, 6, split.n2))
            for _ in range(3)
        ]
        assert jets_equal(e, e2, pts), text


# ---------------------------------------------------------------------------
# jets

def test_jet_product_rule():
    j = eval_jet(parse("x1*y1", SP11), ProductPoint([2.0], [3.0]), 1)
    assert j.value == 6.0
    assert j.partial(0) == 3.0
    assert j.partial(1) == 2.0


def test_jet_sine_taylor():
    j = eval_jet(parse("sin(x1)", SP11), ProductPoint([0.0], [0.0]), 3)
    assert [j.partials[(0,) * k] for k in range(4)] == [0.0, 1.0, 0.0, -1.0]


def test_jet_vs_finite_differences_example(rng):
    e = parse("exp(2*y1)*sin(x1)", SP11)
    for _ in range(5):
        pt = np.concatenate([rng.uniform(0.1, 2, 1), rng.uniform(0.1, 1, 1)])
        j = eval_jet(e, ProductPoint(pt[:1], pt[1:]), 2)
        for idx in [(0,), (1,), (0, 0), (0, 1), (1, 1)]:
            fd = fd_partial(e, pt, idx)
            assert abs(j.partial(*idx) - fd) <= 1e-6 * max(1.0, abs(fd))


def test_jet_exactness_property(rng):
    """Jets match nested central differences for every grammar production."""
    checked = 0
    while checked < 100:
        split = CoordSplit(int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        text = random_expr_text(rng, split)
        e = parse(text, split)
        pt = rng.uniform(0.3, 5.9, split.n)
        j = eval_jet(e, ProductPoint(pt[: split.n1], pt[split.n1:]), 2)
        idxs = [(i,) for i in range(split.n)]
        idxs += [(i, k) for i in range(split.n) for k in range(i, split.n)]
        for idx in idxs:
            fd = fd_partial(e, pt, idx)
            assert abs(j.partial(*idx) - fd) <= 1e-5 * max(1.0, abs(fd)), (text, idx)
        checked += 1


def test_jet_domain_errors():
    with pytest.raises(EvalDomainError) as exc:
        eval_jet(parse("log(x1-5)", SP11), ProductPoint([1.0], [0.0]), 1)
    assert "log(x1-5.0)" in str(exc.value)
    with pytest.raises(EvalDomainError):
        eval_jet(parse("1/sin(x1)", SP11), ProductPoint([0.0], [0.0]), 1)
    with pytest.raises(EvalDomainError):
        eval_values(parse("1/sin(x1)", SP11), np.array([[0.0, 0.0]]))


def test_high_order_jet_exp():
    # d^k/dt^k exp(2t) = 2^k exp(2t)
    j = eval_jet(parse("exp(2*x1)", SP11), ProductPoint([0.3], [0.0]), 5)
    for k in range(6):
        assert j.partials[(0,) * k] == pytest.approx(2.0**k * math.exp(0.6), rel=1e-12)


# ---------------------------------------------------------------------------
# split differential and mixed derivatives

def test_split_differential_separated():
    d1, d2 = split_differential(parse("sin(x1)+cos(y1)", SP11), ProductPoint([0.0], [0.0]))
    assert d1.tolist() == [1.0]
    assert d2.tolist() == [0.0]


def test_split_differential_y_only(rng):
    e = parse("cos(y1)*sin(y2)", SP12)
    for _ in range(20):
        p = ProductPoint(rng.uniform(0, 6, 1), rng.uniform(0, 6, 2))
        d1, _ = split_differential(e, p)
        assert np.all(d1 == 0.0)


def test_split_differential_concatenates_to_gradient(rng):
    e = parse("x1*y1", SP11)
    p = ProductPoint([2.0], [3.0])
    d1, d2 = split_differential(e, p)
    assert d1.tolist() == [3.0] and d2.tolist() == [2.0]
    assert np.allclose(np.concatenate([d1, d2]), eval_jet(e, p, 1).gradient())


def test_mixed_d1d2_cases():
    assert np.allclose(mixed_d1d2(parse("sin(x1)+cos(y1)", SP11),
                                  ProductPoint([0.4], [1.0])), 0.0)
    assert np.allclose(mixed_d1d2(parse("x1*y1", SP11),
                                  ProductPoint([2.0], [3.0])), [[1.0]])
    m = mixed_d1d2(parse("sin(x1)*cos(y1)", SP11),
                   ProductPoint([math.pi / 4], [math.pi / 4]))
    assert m[0, 0] == pytest.approx(-0.5, abs=1e-12)


def test_mixed_partial_symmetry_independent_route(rng):
    """Taylor-engine mixed partials equal the nested-dual route, the jet-level
    statement of d1 d2 + d2 d1 = 0 on functions."""
    for _ in range(100):
        split = CoordSplit(int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        e = parse(random_expr_text(rng, split), split)
        pt = rng.uniform(0.3, 5.9, split.n)
        p = ProductPoint(pt[: split.n1], pt[split.n1:])
        m = mixed_d1d2(e, p)
        for i in range(split.n1):
            for j in range(split.n2):
                alt = dual2_mixed(e, p, i, split.n1 + j)
                assert abs(m[i, j] - alt) < 1e-10 * max(1.0, abs(alt))


def test_eval_values_matches_pointwise(rng):
    e = parse("exp(0.5*sin(x1))*cos(y1)+x1^2", SP11)
    pts = rng.uniform(0, 6, size=(50, 2))
    vals = eval_values(e, pts)
    for row, v in zip(pts, vals):
        assert v == pytest.approx(
            eval_value(e, ProductPoint(row[:1], row[1:])), rel=1e-14
        )


def test_immutability():
    e = parse("x1", SP11)
    with pytest.raises(AttributeError):
        e.root = None
    p = ProductPoint([1.0], [2.0])
    with pytest.raises(AttributeError):
        p.x = None
