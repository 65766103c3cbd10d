import math

import pytest
from hypothesis import given, settings, strategies as st

from planarmin.field import (BUILTIN_NAMES, FieldDomainError, FieldError, FieldParseError, builtin,
                             builtin_source, parse_field)


def test_center_and_vdp_sources():
    center = parse_field("-y", "x")
    assert center(1.0, 0.0) == (0.0, 1.0)
    assert center(0.0, 0.0) == (0.0, 0.0)
    vdp = parse_field("y", "mu*(1-x^2)*y - x", {"mu": 1.0})
    assert vdp(2.0, 1.0) == (1.0, -5.0)


@pytest.mark.parametrize("src, offset", [
    ("-y + (", 6),
    ("x $ y", 2),
    ("sin(x, y)", 5),
    ("foo(x)", 0),
    ("x + z", 4),
    ("x ^ y", 4),
    ("(x", 2),
])
def test_parse_errors_are_positioned(src, offset):
    with pytest.raises(FieldParseError) as info:
        parse_field(src, "x")
    assert info.value.pos == offset
    assert f"at offset {offset}" in str(info.value)
    assert str(info.value).startswith("fx:")


def test_deep_nesting_is_an_error_not_a_crash():
    with pytest.raises(FieldParseError):
        parse_field("(" * 5000 + "x" + ")" * 5000, "y")


def test_domain_errors():
    f = parse_field("sqrt(x)", "1/y")
    with pytest.raises(FieldDomainError):
        f(-1.0, 1.0)
    with pytest.raises(FieldDomainError):
        f(1.0, 0.0)
    with pytest.raises(FieldDomainError):
        parse_field("exp(x)", "y")(1e6, 0.0)


def test_bad_parameter_names():
    with pytest.raises(FieldError):
        parse_field("x", "y", {"sin": 1.0})
    with pytest.raises(FieldError):
        parse_field("x", "y", {"x": 1.0})


def test_builtins():
    assert builtin("center")(0.0, 1.0) == (-1.0, 0.0)
    assert builtin("stable_focus")(0.0, 0.0) == (0.0, 0.0)
    assert builtin("vdp", mu=1)(0.0, 1.0) == (1.0, 1.0)
    with pytest.raises(FieldError):
        builtin("nope")
    with pytest.raises(FieldError):
        builtin("center", mu=2)


coord = st.floats(-3, 3, allow_nan=False)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
@settings(max_examples=50, deadline=None)
@given(x=coord, y=coord, mu=st.floats(0.1, 5))
def test_builtin_matches_its_parsed_source(name, x, y, mu):
    sx, sy, defaults = builtin_source(name)
    params = {k: mu for k in defaults}
    hand = builtin(name, **params)(x, y)
    parsed = parse_field(sx, sy, params)(x, y)
    assert hand == pytest.approx(parsed, rel=1e-14, abs=1e-14)


def test_fingerprint_tracks_parameters():
    assert builtin("vdp", mu=1).fingerprint() == builtin("vdp").fingerprint()
    assert builtin("vdp", mu=2).fingerprint() != builtin("vdp").fingerprint()


# random expression trees, rendered both as source text and as a Python closure
leaves = st.one_of(
    st.sampled_from([("x", lambda x, y: x), ("y", lambda x, y: y)]),
    st.floats(0.1, 9).map(lambda c: (repr(c), lambda x, y, c=c: c)),
)


def _extend(children):
    binop = st.tuples(st.sampled_from("+-*"), children, children).map(
        lambda t: (f"({t[1][0]} {t[0]} {t[2][0]})",
                   {"+": lambda a, b: lambda x, y: a(x, y) + b(x, y),
                    "-": lambda a, b: lambda x, y: a(x, y) - b(x, y),
                    "*": lambda a, b: lambda x, y: a(x, y) * b(x, y)}[t[0]](t[1][1], t[2][1])))
    unary = st.tuples(st.sampled_from(["sin", "cos", "tanh", "-"]), children).map(
        lambda t: (f"-{t[1][0]}" if t[0] == "-" else f"{t[0]}({t[1][0]})",
                   (lambda g: lambda x, y: -g(x, y)) (t[1][1]) if t[0] == "-"
                   else (lambda fn, g: lambda x, y: fn(g(x, y)))(getattr(math, t[0]), t[1][1])))
    square = children.map(lambda c: (f"({c[0]})^2", lambda x, y, g=c[1]: g(x, y) ** 2))
    return st.one_of(binop, unary, square)


exprs = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(exprs, coord, coord)
def test_parser_agrees_with_direct_evaluation(e, x, y):
    src, fn = e
    f = parse_field(src, "0")
    want = fn(x, y)
    got = f(x, y)[0]
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
