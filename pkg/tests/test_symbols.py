import numpy as np
import pytest

from grid_core import UniformGrid
from symbols import (
    BracketPower,
    GaussianFactor,
    SymbolError,
    certify_class,
    check_boundedness_hypotheses,
    forward_difference,
    hormander,
    joint_gradient,
    linear,
    one,
    peaked,
    perturbed,
    phase_checks,
    PhaseSpec,
    SymbolSpec,
    random_sg,
    sample_symbol,
    sg,
    sg_class,
    shifted,
    spike,
    torus_bracket,
    torus_class,
    zero_phase,
)
from utils import bracket


def test_sample_symbol_on_a_product_grid():
    x_grid = UniformGrid(1, 16, 2.0)
    xi_grid = x_grid.dual()
    field = sample_symbol(sg(2, 0, 1), [x_grid, xi_grid, xi_grid])
    assert field.data.shape == (16, 16, 16)
    x, xi = x_grid.axis()[3], xi_grid.axis()[5]
    expected = np.sqrt(1 + x * x) * (1 + xi * xi)
    assert field.data[3, 5, 7] == pytest.approx(expected)
    assert sample_symbol(sg(2, 0, 1), [x_grid, xi_grid, xi_grid]).data.shape == (16, 16, 16)


def test_sample_symbol_is_cached_and_checks_arity():
    s = peaked(1.0)
    grid = UniformGrid(1, 8, 2.0)
    assert sample_symbol(s, [grid, grid.dual()]) is sample_symbol(s, [grid, grid.dual()])
    with pytest.raises(SymbolError):
        sample_symbol(s, [grid])
    with pytest.raises(SymbolError):
        s(np.zeros((1, 1)))


@pytest.mark.parametrize("factor", [BracketPower(-1.5), BracketPower(2.0), GaussianFactor(0.7)])
def test_factor_derivatives_match_finite_differences(factor):
    t = np.linspace(-3, 3, 13)[:, None]
    h = 1e-5
    for order in range(1, 4):
        previous = factor.derivative(order - 1)
        numeric = (previous(t + h) - previous(t - h)) / (2 * h)
        assert np.allclose(factor.derivative(order)(t), numeric, rtol=1e-6, atol=1e-7)


def test_constant_symbol_is_in_sg_zero():
    report = certify_class(one(2, declared=sg_class(0, 0, 0)))
    assert report.passed
    assert report.max_ratio <= 1 + 1e-6
    assert all(row.method == "analytic" for row in report.rows)


def test_sg_symbol_class_membership():
    s = sg(2, 0, 1)
    assert certify_class(s).passed
    tighter = certify_class(s.declare(sg_class(1, 0, 1)))
    assert not tighter.passed
    assert any("grows" in row.note for row in tighter.rows)


def test_loosening_the_orders_keeps_a_pass():
    s = sg(2, 0, 1)
    for orders in [(2, 0, 1), (3, 0, 1), (2, 1, 1), (3, 1, 2)]:
        assert certify_class(s.declare(sg_class(*orders))).passed


def test_hormander_bracket_class():
    square = SymbolSpec("square", 1, lambda x, xi: bracket(xi) ** 2.0 + 0 * x[..., 0], hormander((2.0,)))
    report = certify_class(square)
    assert report.passed
    assert report.notes
    assert all(row.method == "fd" for row in report.rows)


def test_torus_bracket_class():
    report = certify_class(torus_bracket(-1.0), box=16.0)
    assert report.passed
    assert all(row.method in ("exact", "fd") for row in report.rows)
    assert not certify_class(torus_bracket(-1.0).declare(torus_class((-2.0,))), box=16.0).passed


def test_random_sg_symbol_certifies_by_finite_differences():
    report = certify_class(random_sg(seed=3), order_limit=(1, 1, 1), box=4.0, growth=2.0)
    assert report.passed
    assert {row.method for row in report.rows} == {"fd"}


def test_forward_difference_of_polynomial_symbol():
    cube = SymbolSpec(
        "cube", 1, lambda x, k: k[..., 0] ** 3 + 0 * x[..., 0], torus_class((3.0,)), None, True
    )
    k = np.arange(-5, 6, dtype=float)[:, None]
    x = np.zeros_like(k)
    third = forward_difference(cube, [(3,)])
    assert np.all(third(x, k) == 6.0)
    assert np.all(forward_difference(cube, [(4,)])(x, k) == 0.0)


def test_forward_differences_commute():
    s = SymbolSpec(
        "poly", 2, lambda x, k, l: (k[..., 0] ** 2) * l[..., 0] + 3 * k[..., 0] * l[..., 0] ** 3, torus_class((2.0, 3.0)), None, True
    )
    k = np.arange(-4, 5, dtype=float)[:, None, None]
    l = np.arange(-4, 5, dtype=float)[None, :, None]
    x = np.zeros((1, 1, 1))
    first = forward_difference(forward_difference(s, [(1,), (0,)]), [(0,), (1,)])
    second = forward_difference(forward_difference(s, [(0,), (1,)]), [(1,), (0,)])
    assert np.array_equal(first(x, k, l), second(x, k, l))
    assert np.array_equal(first(x, k, l), forward_difference(s, [(1,), (1,)])(x, k, l))


def test_forward_difference_needs_integer_frequencies():
    with pytest.raises(SymbolError):
        forward_difference(sg(0, 0, 0), [(1,), (0,)])
    with pytest.raises(SymbolError):
        forward_difference(torus_bracket(1.0, r=2), [(1,)])


def test_spike_symbol():
    s = spike([2])
    k = np.arange(-3, 4, dtype=float)[:, None]
    values = s(np.zeros_like(k), k)
    assert values.tolist() == [0, 0, 0, 0, 0, 1, 0]


def test_linear_phase_checks():
    report = phase_checks(linear(), samples=50, seed=0)
    assert report.gradient_error < 1e-8
    assert report.linearity_error < 1e-10
    assert report.delta_estimate == pytest.approx(1.0, abs=1e-6)
    assert report.second_order_max == pytest.approx(1.0, abs=1e-6)
    assert report.third_order_max < 1e-3
    assert not report.degenerate
    assert report.bound_violations == 0


def test_perturbed_phase_is_nondegenerate():
    report = phase_checks(perturbed(0.1), samples=200, seed=1)
    assert report.delta_estimate >= 0.9 - 1e-6
    assert not report.degenerate
    assert report.third_order_max > 0


def test_zero_phase_is_degenerate():
    report = phase_checks(zero_phase(), samples=20, seed=2)
    assert report.degenerate
    assert report.delta_estimate == 0.0


def test_bilinear_phase_checks():
    report = phase_checks([linear(), shifted(0.5)], samples=40, seed=3)
    assert report.delta_estimate == pytest.approx(1.0, abs=1e-6)
    x = np.array([[0.25]])
    grad = joint_gradient([linear(), shifted(0.5)], x, [np.array([[1.0]]), np.array([[2.0]])])
    assert np.allclose(grad, [[3.0, 0.25, 0.75]])


def test_wrong_gradient_is_rejected():
    bad = PhaseSpec(
        "bad",
        lambda x, xi: np.sum(x * xi, axis=-1),
        lambda x, xi: (2 * xi, x),
    )
    with pytest.raises(SymbolError):
        phase_checks(bad, samples=10, seed=4)


def test_nonlinear_phase_shows_linearity_error():
    curved = PhaseSpec(
        "curved",
        lambda x, xi: np.sum(x * xi + xi ** 2, axis=-1),
        lambda x, xi: (xi, x + 2 * xi),
        linear_in_second=True,
    )
    assert phase_checks(curved, samples=10, seed=5).linearity_error > 1e-3


def test_boundedness_hypotheses():
    ok, problems = check_boundedness_hypotheses(s1=-8, s2=0, m1=0, m2=0, d=1, n1=1, n2=1, n3=1)
    assert ok and problems == []
    ok, problems = check_boundedness_hypotheses(s1=0, s2=4, m1=1, m2=0, d=1, n1=1, n2=0.25, n3=1)
    assert not ok
    assert len(problems) == 3
