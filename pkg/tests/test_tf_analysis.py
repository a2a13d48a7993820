import numpy as np
import pytest

from grid_core import (
    GridError,
    SampledField,
    TimeFrequencyShift,
    UniformGrid,
    apply_shift,
    gaussian,
    l2_norm,
    random_wave_packets,
)
from lattice import CoefficientTensor
from tf_analysis import (
    NestedNormSpec,
    StftField,
    mixed_norm,
    modulation_norm,
    nested_mixed_norm,
    stft,
    stft_invert,
    window_equivalence,
)
from weights import PolynomialWeight

GRID = UniformGrid(1, 256, 8.0)
SMALL = UniformGrid(1, 64, 4.0)


def _tensor(entries, names):
    indices = tuple(np.arange(n) - n // 2 for n in entries.shape)
    return CoefficientTensor(entries, tuple(names), indices, (1.0,) * entries.ndim)


def _naive_nested(values, exps):
    if not exps:
        return abs(values)
    parts = np.array([_naive_nested(values[i], exps[1:]) for i in range(values.shape[0])])
    if np.isinf(exps[0]):
        return parts.max()
    return (parts ** exps[0]).sum() ** (1.0 / exps[0])


def test_stft_of_zero_is_zero():
    g = gaussian(GRID)
    V = stft(SampledField((GRID,), np.zeros(GRID.shape)), g)
    assert np.all(V.values == 0)


def test_stft_of_gaussian_against_itself():
    g = gaussian(GRID)
    V = stft(g, g)
    x_index = int(round((1.0 + 8.0) / GRID.spacing))
    xi_index = GRID.n // 2
    assert V.time_grid.axis()[x_index] == pytest.approx(1.0)
    assert V.freq_grid.axis()[xi_index] == pytest.approx(0.0)
    assert abs(V.values[x_index, xi_index]) == pytest.approx(np.exp(-np.pi / 2), abs=1e-6)


def test_stft_matches_direct_sum_on_custom_grids():
    rng = np.random.default_rng(0)
    f = random_wave_packets(SMALL, rng)
    g = gaussian(SMALL, width=0.7)
    time_grid = UniformGrid(1, 16, 4.0)
    freq_grid = UniformGrid(1, 10, 3.0)
    V = stft(f, g, (time_grid, freq_grid))
    t = SMALL.axis()
    for i, x in enumerate(time_grid.axis()):
        window = gaussian(SMALL, center=x, width=0.7).data.copy()
        window[t < x - 4.0 - 1e-12] = 0.0
        window[t >= x + 4.0 - 1e-12] = 0.0
        for j, xi in enumerate(freq_grid.axis()):
            direct = np.sum(f.data * np.conj(window) * np.exp(-2j * np.pi * xi * t)) * SMALL.spacing
            assert V.values[i, j] == pytest.approx(direct, abs=1e-12)


def test_stft_rejects_off_grid_times_and_zero_window():
    f = gaussian(SMALL)
    with pytest.raises(GridError):
        stft(f, f, (UniformGrid(1, 10, 4.0 / 3.0), SMALL.dual()))
    with pytest.raises(GridError):
        stft(f, SampledField((SMALL,), np.zeros(SMALL.shape)))


def test_moyal_identity():
    rng = np.random.default_rng(1)
    g = gaussian(GRID, width=1.3)
    for _ in range(3):
        f = random_wave_packets(GRID, rng)
        V = stft(f, g)
        assert mixed_norm(V, 2, 2) == pytest.approx(l2_norm(f) * l2_norm(g), rel=1e-8)


def test_stft_round_trip():
    g = gaussian(GRID)
    f = gaussian(GRID)
    back = stft_invert(stft(f, g), g)
    assert l2_norm(back.with_data(back.data - f.data)) < 1e-6 * l2_norm(f)

    rng = np.random.default_rng(2)
    packets = random_wave_packets(GRID, rng, count=6)
    back = stft_invert(stft(packets, g), g)
    assert l2_norm(back.with_data(back.data - packets.data)) < 1e-6 * l2_norm(packets)


def test_stft_invert_of_zero_and_on_a_custom_frequency_grid():
    g = gaussian(SMALL)
    zero = StftField(np.zeros((64, 64), dtype=complex), SMALL, SMALL.dual(), 1.0)
    assert np.all(stft_invert(zero, g).data == 0)

    f = gaussian(SMALL, center=0.5, frequency=1.0)
    freq_grid = UniformGrid(1, 128, 4.0)
    back = stft_invert(stft(f, g, (SMALL, freq_grid)), g)
    assert l2_norm(back.with_data(back.data - f.data)) < 1e-6


def test_mixed_norm_single_cell():
    values = np.zeros((64, 64), dtype=complex)
    values[10, 20] = 2.0
    F = StftField(values, SMALL, SMALL.dual(), 1.0)
    assert mixed_norm(F, 1, 1) == pytest.approx(2.0 * SMALL.spacing / (2 * SMALL.half_width))
    assert mixed_norm(F, np.inf, np.inf) == pytest.approx(2.0)
    assert mixed_norm(StftField(np.zeros((64, 64)), SMALL, SMALL.dual(), 1.0), 1, 2) == 0.0


def test_mixed_norm_on_coefficients_uses_lattice_weights():
    entries = np.zeros((3, 3))
    entries[2, 0] = 1.0
    T = CoefficientTensor(entries, ("m", "n"), (np.array([-1, 0, 1]), np.array([-1, 0, 1])), (0.5, 2.0))
    # point (alpha*1, beta*-1) = (0.5, -2)
    assert mixed_norm(T, 1, 1, PolynomialWeight(2.0, 2)) == pytest.approx(1 + 0.25 + 4)
    with pytest.raises(GridError):
        mixed_norm(_tensor(np.ones((2, 2, 2)), "abc"), 1, 1)


def test_modulation_norm_is_homogeneous():
    rng = np.random.default_rng(3)
    g = gaussian(SMALL)
    f = random_wave_packets(SMALL, rng)
    assert modulation_norm(f.with_data(np.zeros(SMALL.shape)), g, 1, 1) == 0.0
    for p, q in [(1, 1), (2, np.inf), (np.inf, 1)]:
        c = complex(rng.normal(), rng.normal())
        scaled = modulation_norm(f.scaled(c), g, p, q, PolynomialWeight(2.0, 2))
        assert scaled == pytest.approx(abs(c) * modulation_norm(f, g, p, q, PolynomialWeight(2.0, 2)), rel=1e-12)


def test_stft_magnitude_is_shift_covariant():
    g = gaussian(GRID)
    f = random_wave_packets(GRID, np.random.default_rng(4))
    steps = 24
    moved = apply_shift(f, TimeFrequencyShift((steps * GRID.spacing,), (0.0,)))
    a = np.abs(stft(moved, g).values)
    b = np.abs(stft(f, g).values)
    assert np.max(np.abs(a[steps:] - b[:-steps])) < 1e-10


def test_different_windows_give_equivalent_norms():
    rng = np.random.default_rng(5)
    signals = [random_wave_packets(SMALL, rng) for _ in range(20)]
    low, high = window_equivalence(signals, gaussian(SMALL), gaussian(SMALL, width=0.5), 1, 1)
    assert 0 < low <= high < np.inf
    assert high / low < 10.0


def test_norm_inclusions_with_a_normalized_window():
    rng = np.random.default_rng(6)
    g = gaussian(SMALL)
    for _ in range(20):
        V = stft(random_wave_packets(SMALL, rng), g)
        one, two, sup = mixed_norm(V, 1, 1), mixed_norm(V, 2, 2), mixed_norm(V, np.inf, np.inf)
        assert one >= two * 0.99
        assert two >= sup * 0.99


def test_nested_norm_of_a_single_entry():
    entries = np.zeros((2, 3, 2, 2, 3, 2), dtype=complex)
    entries[1, 2, 0, 1, 1, 0] = 3 - 4j
    T = _tensor(entries, ["n", "n0", "n'", "m'", "m", "m0"])
    for exps in ([1, 1, 1, 1, 1, 1], [np.inf, np.inf, 1, np.inf, 1, 1], [2, 3, np.inf, 1, 4, 2]):
        spec = NestedNormSpec(("n", "n0", "n'", "m'", "m", "m0"), tuple(exps))
        assert nested_mixed_norm(T, spec) == pytest.approx(5.0)


def test_nested_norm_of_all_ones():
    T = _tensor(np.ones((2,) * 6), ["m'", "n'", "m", "n", "m0", "n0"])
    spec = NestedNormSpec(("n", "n0", "n'", "m'", "m", "m0"), (np.inf, np.inf, 1, np.inf, 1, 1))
    assert nested_mixed_norm(T, spec) == pytest.approx(8.0)


def test_nested_norm_matches_naive_recursion():
    rng = np.random.default_rng(7)
    names = ["m'", "n'", "m", "n", "m0", "n0"]
    entries = rng.normal(size=(3, 2, 4, 2, 3, 2)) + 1j * rng.normal(size=(3, 2, 4, 2, 3, 2))
    T = _tensor(entries, names)
    for _ in range(5):
        order = list(rng.permutation(names))
        exps = [float(rng.choice([1.0, 2.0, 3.0, np.inf])) for _ in names]
        transposed = np.transpose(entries, [names.index(n) for n in order])
        expected = _naive_nested(transposed, exps)
        assert nested_mixed_norm(T, NestedNormSpec(tuple(order), tuple(exps))) == pytest.approx(expected, rel=1e-12)


def test_nested_norm_with_equal_exponents_is_flat():
    rng = np.random.default_rng(8)
    entries = rng.normal(size=(3, 4, 5))
    T = _tensor(entries, ["a", "b", "c"])
    for p in (1.0, 2.5, np.inf):
        flat = np.abs(entries).max() if np.isinf(p) else (np.abs(entries) ** p).sum() ** (1 / p)
        assert nested_mixed_norm(T, NestedNormSpec(("c", "a", "b"), (p, p, p))) == pytest.approx(flat, rel=1e-12)


def test_sequence_norms_decrease_in_p():
    rng = np.random.default_rng(9)
    T = _tensor(rng.normal(size=(40,)), ["m"])
    values = [nested_mixed_norm(T, NestedNormSpec(("m",), (p,))) for p in (1, 1.5, 2, 4, np.inf)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_nested_norm_rejects_malformed_specs():
    T = _tensor(np.ones((2, 2)), ["m", "n"])
    with pytest.raises(GridError):
        nested_mixed_norm(T, NestedNormSpec(("m", "k"), (1, 1)))
    with pytest.raises(GridError):
        NestedNormSpec(("m", "n"), (0.5, 1))
    with pytest.raises(GridError):
        NestedNormSpec(("m", "m"), (1, 1))
