import numpy as np
import pytest

from gabor import (
    FrameError,
    analyze,
    bilinear_frame_operator,
    dual_residual,
    dual_window,
    expand,
    frame_bounds,
    frame_matrix,
    frame_operator,
    gabor_system,
    rayleigh_bounds,
    synthesize,
    tighten,
    with_radius,
)
from grid_core import GridError, SampledField, UniformGrid, gaussian, inner, l2_norm, random_wave_packets

GRID = UniformGrid(1, 256, 8.0)


@pytest.fixture(scope="module")
def system():
    return gabor_system(gaussian(GRID), 0.5, 0.5)


@pytest.fixture(scope="module")
def tight(system):
    return tighten(system)


def _relative_error(a: SampledField, b: SampledField) -> float:
    return float(np.linalg.norm(a.data - b.data) / np.linalg.norm(b.data))


def test_lattice_covers_the_periodized_grid(system):
    assert system.shape == (32, 32)
    assert system.m_range == (-16, 15)
    assert system.atoms.shape == (1024, 256)
    with pytest.raises(GridError):
        gabor_system(gaussian(GRID), 0.3, 0.5)


def test_analyze_zero_and_self(system):
    zero = analyze(system, SampledField((GRID,), np.zeros(GRID.shape)))
    assert np.all(zero.entries == 0)
    coeffs = analyze(system, gaussian(GRID))
    origin = coeffs.position("m", [0]), coeffs.position("n", [0])
    assert coeffs.entries[origin] == pytest.approx(1.0, abs=1e-12)


def test_gaussian_coefficients_decay(system):
    coeffs = analyze(system, gaussian(GRID))
    far = (np.abs(coeffs.points("m"))[:, None, 0] >= 6) | (np.abs(coeffs.points("n"))[None, :, 0] >= 6)
    assert np.abs(coeffs.entries[far]).max() < 1e-8


def test_analyze_rejects_other_grids(system):
    with pytest.raises(GridError):
        analyze(system, gaussian(UniformGrid(1, 128, 8.0)))


def test_synthesize_zero_and_delta(system):
    coeffs = analyze(system, gaussian(GRID))
    assert np.all(synthesize(system, coeffs.with_entries(np.zeros(coeffs.entries.shape))).data == 0)
    delta = np.zeros(coeffs.entries.shape)
    delta[coeffs.position("m", [0]), coeffs.position("n", [0])] = 1.0
    assert np.allclose(synthesize(system, coeffs.with_entries(delta)).data, system.window.data)


def test_synthesize_rejects_mismatched_ranges(system):
    small = with_radius(system, 4, 4)
    with pytest.raises(GridError):
        synthesize(system, analyze(small, gaussian(GRID)))


def test_tight_system_reconstructs(tight):
    rng = np.random.default_rng(0)
    for _ in range(3):
        f = random_wave_packets(GRID, rng)
        assert _relative_error(synthesize(tight, analyze(tight, f)), f) < 1e-8
    assert frame_bounds(tight) == pytest.approx((1.0, 1.0), abs=1e-9)
    assert l2_norm(tight.window) ** 2 == pytest.approx(0.25, rel=1e-9)


def test_tightening_a_tight_system_keeps_the_window(tight):
    again = tighten(tight)
    assert np.max(np.abs(again.window.data - tight.window.data)) < 1e-10


def test_frame_operator_is_self_adjoint(system):
    rng = np.random.default_rng(1)
    assert np.all(frame_operator(system, SampledField((GRID,), np.zeros(GRID.shape))).data == 0)
    for _ in range(3):
        f1 = SampledField((GRID,), rng.normal(size=256) + 1j * rng.normal(size=256))
        f2 = SampledField((GRID,), rng.normal(size=256) + 1j * rng.normal(size=256))
        left = inner(frame_operator(system, f1), f2)
        right = inner(f1, frame_operator(system, f2))
        assert abs(left - right) < 1e-10 * max(1.0, abs(left))


def test_rayleigh_quotients_sit_inside_the_frame_bounds(system):
    lower, upper = frame_bounds(system)
    low, high = rayleigh_bounds(system, count=50, seed=2)
    assert 0 < lower <= low * (1 + 1e-12)
    assert high <= upper * (1 + 1e-12)
    assert upper / lower < 2.0


def test_frame_bounds_are_stable_across_truncations():
    small = gabor_system(gaussian(UniformGrid(1, 128, 8.0)), 0.5, 0.5)
    large = gabor_system(gaussian(UniformGrid(1, 256, 16.0)), 0.5, 0.5)
    a_small, b_small = frame_bounds(small)
    a_large, b_large = frame_bounds(large)
    assert a_small > 1.0
    assert a_small == pytest.approx(a_large, rel=1e-3)
    assert b_small == pytest.approx(b_large, rel=1e-3)


def test_dual_window_reconstruction_and_dense_oracle(system):
    gamma = dual_window(system, tol=1e-12)
    dense = np.linalg.solve(frame_matrix(system), system.window.data.reshape(-1))
    assert np.max(np.abs(gamma.data.reshape(-1) - dense)) < 1e-8
    assert dual_residual(system, gamma) < 1e-10
    assert dual_residual(system, system.window) > 1e-3

    rng = np.random.default_rng(3)
    f = random_wave_packets(GRID, rng)
    rebuilt = synthesize(system.with_window(gamma), analyze(system, f))
    assert _relative_error(rebuilt, f) < 1e-8


def test_dual_of_a_tight_window_is_itself(tight):
    gamma = dual_window(tight, tol=1e-12)
    assert np.max(np.abs(gamma.data - tight.window.data)) < 1e-10


def test_gaussian_at_critical_density_is_not_a_frame():
    for grid in (UniformGrid(1, 128, 8.0), UniformGrid(1, 256, 8.0)):
        critical = gabor_system(gaussian(grid), 1.0, 1.0)
        lower, upper = frame_bounds(critical)
        assert lower < 1e-6 * upper
        with pytest.raises(FrameError):
            dual_window(critical)
        with pytest.raises(FrameError):
            tighten(critical)


def test_analysis_and_synthesis_are_adjoint(system):
    rng = np.random.default_rng(4)
    f = SampledField((GRID,), rng.normal(size=256) + 1j * rng.normal(size=256))
    c = analyze(system, f)
    entries = rng.normal(size=c.entries.shape) + 1j * rng.normal(size=c.entries.shape)
    left = inner(synthesize(system, c.with_entries(entries)), f)
    right = np.sum(entries * np.conj(c.entries))
    assert abs(left - right) < 1e-10 * abs(left)


def test_bilinear_expansions_reconstruct_tensor_products(system):
    rng = np.random.default_rng(5)
    gamma = dual_window(system, tol=1e-12)
    f1 = random_wave_packets(GRID, rng)
    f2 = random_wave_packets(GRID, rng)
    target = SampledField((GRID, GRID), np.multiply.outer(f1.data, f2.data))
    for order in ("window", "dual"):
        assert _relative_error(expand(system, gamma, f1, f2, order), target) < 1e-8


def test_bilinear_frame_operator_with_and_without_conjugate(system, tight):
    rng = np.random.default_rng(6)
    f1 = random_wave_packets(GRID, rng)
    f2 = random_wave_packets(GRID, rng)
    plain = bilinear_frame_operator(system, f1, f2, conjugate_second=False)
    expected = np.multiply.outer(frame_operator(system, f1).data, frame_operator(system, f2).data)
    assert np.allclose(plain.data, expected, atol=1e-10)

    literal = bilinear_frame_operator(tight, f1, f2)
    c2 = np.conj(np.conj(tight.atoms) @ f2.data * GRID.cell)
    second = tight.atoms.T @ c2
    assert np.allclose(literal.data, np.multiply.outer(f1.data, second), atol=1e-8)
