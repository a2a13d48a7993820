import numpy as np
import pytest

from symbols import SymbolSpec
from terms import (
    ConfigError,
    Term,
    canonical,
    parse_term,
    parse_value,
    resolve_norm,
    resolve_phase,
    resolve_symbol,
    resolve_weight,
    serialize,
)
from weights import PullbackWeight, TensorWeight, VWeight


def test_parse_simple_term():
    term = parse_term("sg(0, 0.5, m3=-1)")
    assert term.name == "sg"
    assert term.args == (0.0, 0.5)
    assert term.kwarg_dict() == {"m3": -1.0}


def test_names_with_dots_and_primes():
    assert parse_term("phase.linear").name == "phase.linear"
    order = parse_term("norm(order=[n', n0, m], exps=[inf, 1, 2])").kwarg_dict()["order"]
    assert [t.name for t in order] == ["n'", "n0", "m"]


def test_serialization_is_canonical():
    assert canonical("  sg( 1.0 , 2.50 , m3 = -inf ) ") == "sg(1,2.5,m3=-inf)"
    assert canonical("f(b=1, a=2)") == canonical("f(a=2,b=1)") == "f(a=2,b=1)"
    assert canonical("one()") == "one"
    assert canonical("[1, [2, 3e2]]") == "[1,[2,300]]"


def test_reparse_of_serialized_terms_is_identity():
    for text in ["pullback(v(1,0.5),r=2)", "norm(order=[n,n0],exps=[inf,1])", "phase.shifted(c=[0.25])"]:
        term = parse_term(text)
        assert parse_term(serialize(term)) == term
        assert canonical(serialize(term)) == serialize(term)


def test_positions_do_not_affect_equality():
    assert parse_term("one") == parse_term("   one")
    assert parse_term("   one").position == (1, 4)


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("sg(1, 2", 1, 8),
        ("sg(1,, 2)", 1, 6),
        ("sg(1)\n  )", 2, 3),
        ("sg(1) $", 1, 7),
        ("sg(a=1, 2)", 1, 9),
        ("sg(a=1, a=2)", 1, 9),
    ],
)
def test_syntax_errors_report_line_and_column(text, line, column):
    with pytest.raises(ConfigError) as info:
        parse_value(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert str(info.value).startswith(f"{line}:{column}: ")


def test_numbers_are_not_terms():
    with pytest.raises(ConfigError):
        parse_term("2.5")


def test_resolve_symbols_and_phases():
    sigma = resolve_symbol("sg(0, 0, 0)")
    assert isinstance(sigma, SymbolSpec)
    assert sigma.arity == 2
    assert resolve_symbol("bracket(-1, slot=2, r=2)").arity == 2
    phase = resolve_phase("phase.perturbed(0.1)")
    x = np.array([[0.3]])
    xi = np.array([[2.0]])
    assert float(phase.evaluator(x, xi)[0]) == pytest.approx((0.3 + 0.1 * np.sin(0.3)) * 2.0)


def test_unknown_names_point_at_the_term():
    with pytest.raises(ConfigError) as info:
        resolve_symbol("  nosuch(1)")
    assert "unknown symbol 'nosuch'" in info.value.message
    assert info.value.column == 3
    with pytest.raises(ConfigError):
        resolve_phase("phase.curved")
    with pytest.raises(ConfigError):
        resolve_weight("omega_s(1)")


def test_bad_arguments_become_config_errors():
    with pytest.raises(ConfigError) as info:
        resolve_symbol("sg(1)")
    assert "cannot build symbol" in info.value.message
    with pytest.raises(ConfigError):
        resolve_symbol("one(nested(2))")


def test_resolve_weights():
    v = resolve_weight("v(1, 0.5)")
    assert isinstance(v, VWeight)
    assert v(np.zeros(3)) == pytest.approx(1.0)
    planar = resolve_weight("planar(v(2, 0))")
    assert isinstance(planar, TensorWeight)
    assert planar(np.array([0.0, 1.0])) == pytest.approx(2.0)
    assert resolve_weight("one").label == "one"
    assert resolve_weight("omega(2, dim=4)").dim == 4
    assert resolve_weight("product(omega(1), omega(-1))")(np.array([3.0, 4.0])) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        resolve_weight("planar(omega(1))")


def test_resolve_pullback_weight():
    w = resolve_weight("pullback(omega(1, dim=4), r=1)")
    assert isinstance(w, PullbackWeight)
    point = np.array([1.0, 2.0, 3.0, 4.0])
    assert w(point) == pytest.approx(np.sqrt(1.0 + np.sum(point ** 2)))
    with pytest.raises(ConfigError):
        resolve_weight("pullback(r=1)")


def test_resolve_norm():
    spec = resolve_norm("norm(order=[n, n0, n', m, m0, m'], exps=[inf, 1, 1, 1, 1, 1])")
    assert spec.index_order == ("n", "n0", "n'", "m", "m0", "m'")
    assert spec.exponents[0] == np.inf
    with pytest.raises(ConfigError):
        resolve_norm("norm(order=[n], exps=[1], extra=2)")
    with pytest.raises(ConfigError):
        resolve_norm("norm(order=[1], exps=[1])")
    with pytest.raises(ConfigError):
        resolve_norm("norm(order=[n, n], exps=[1, 1])")


def test_infinite_exponents_resolve_in_any_slot():
    spec = resolve_norm("norm(order=[n, n0], exps=[1, inf])")
    assert spec.exponents == (1.0, np.inf)
    spec = resolve_norm("norm(order=[m, n], exps=[inf, inf])")
    assert all(np.isinf(e) for e in spec.exponents)
    with pytest.raises(ConfigError):
        resolve_norm("norm(order=[m, n], exps=[-inf, 2])")


def test_term_str_is_serialized():
    assert str(Term("sg", (1.0, 2.0))) == "sg(1,2)"
