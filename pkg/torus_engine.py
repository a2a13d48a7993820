"""Periodic multilinear FIOs on the torus: trigonometric polynomials, kernels and modulation norms."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from fio_engine import KernelField, bk_apply
from grid_core import GridError, SampledField, UniformGrid, dft
from symbols import PhaseSpec, SymbolError, SymbolSpec, joint_phase
from utils import seeded_rng

logger = logging.getLogger(__name__)

LINEARITY_TOL = 1e-9


def torus_grid(n: int, d: int = 1) -> UniformGrid:
    """n samples per axis of the fundamental domain [-1/2, 1/2)^d."""
    if n % 2:
        raise GridError(f"torus grids need an even number of points, got {n}")
    return UniformGrid(d, n, 0.5)


def _require_torus_grid(grid: UniformGrid) -> None:
    if not np.isclose(grid.half_width, 0.5) or grid.n % 2:
        raise GridError(f"expected an even torus grid on [-1/2, 1/2)^d, got N={grid.n}, R={grid.half_width}")


def frequencies(cutoff: int, d: int) -> np.ndarray:
    """All k in Z^d with |k_j| <= cutoff, shape ((2F+1)^d, d), C order."""
    axis = range(-cutoff, cutoff + 1)
    return np.array(list(itertools.product(axis, repeat=d)), dtype=float).reshape(-1, d)


@dataclass(frozen=True, eq=False)
class TorusSignal:
    """Trigonometric polynomial sum_k c_k exp(2 pi i k.x), coefficient axes centred at k = 0."""

    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.ndim == 0 or len(set(coeffs.shape)) != 1 or coeffs.shape[0] % 2 == 0:
            raise GridError(f"coefficients must have shape (2F+1,)*d, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise GridError("torus signal has NaN or Inf coefficients")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return self.coeffs.ndim

    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        ks = frequencies(self.cutoff, self.dim)
        phases = np.exp(2j * np.pi * points.reshape(-1, self.dim) @ ks.T)
        return (phases @ self.flat()).reshape(points.shape[:-1])

    def samples(self, grid: UniformGrid) -> SampledField:
        return SampledField((grid,), self.evaluate(grid.points()))

    @property
    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    @classmethod
    def from_samples(cls, values: SampledField, cutoff: int) -> "TorusSignal":
        """Fourier coefficients up to the cutoff from samples on a torus grid."""
        grid = values.grid
        _require_torus_grid(grid)
        if grid.n < 2 * cutoff + 1:
            raise GridError(f"{grid.n} samples cannot resolve cutoff {cutoff}")
        spectrum = dft(values).data
        start = grid.n // 2 - cutoff
        window = tuple(slice(start, start + 2 * cutoff + 1) for _ in range(grid.dim))
        return cls(spectrum[window])


def pure_frequency(k: Sequence[int], cutoff: Optional[int] = None) -> TorusSignal:
    k = [int(v) for v in np.atleast_1d(k)]
    cutoff = max(abs(v) for v in k) if cutoff is None else cutoff
    coeffs = np.zeros((2 * cutoff + 1,) * len(k), dtype=complex)
    coeffs[tuple(v + cutoff for v in k)] = 1.0
    return TorusSignal(coeffs)


def random_trig_polynomial(cutoff: int, rng: Optional[np.random.Generator] = None, d: int = 1) -> TorusSignal:
    rng = rng or seeded_rng()
    shape = (2 * cutoff + 1,) * d
    return TorusSignal(rng.normal(size=shape) + 1j * rng.normal(size=shape))


def torus_gaussian_window(cutoff: int, d: int = 1, width: Optional[float] = None) -> TorusSignal:
    """Coefficients exp(-pi |k|^2 / w^2), unit L2 norm; w defaults to cutoff / 2."""
    width = width or max(cutoff / 2.0, 0.5)
    ks = frequencies(cutoff, d)
    coeffs = np.exp(-np.pi * np.sum(ks * ks, axis=-1) / width ** 2)
    coeffs = coeffs / np.linalg.norm(coeffs)
    return TorusSignal(coeffs.reshape((2 * cutoff + 1,) * d))


# -----------------------------
# Periodic operators
# -----------------------------


def _check_problem(sigma: SymbolSpec, phases: Sequence[PhaseSpec], d: int, seed: Optional[int] = None) -> None:
    if not sigma.integer_frequencies:
        raise SymbolError(f"{sigma.name} is not a torus symbol")
    if len(phases) != sigma.arity:
        raise SymbolError(f"{sigma.name} has arity {sigma.arity} but {len(phases)} phases were given")
    rng = seeded_rng(seed)
    x = rng.uniform(-0.5, 0.5, size=(8, d))
    k1 = rng.integers(-5, 6, size=(8, d)).astype(float)
    k2 = rng.integers(-5, 6, size=(8, d)).astype(float)
    for phase in phases:
        if not phase.linear_in_second:
            raise SymbolError(f"{phase.name} is not declared linear in k")
        gap = phase(x, k1 + k2) - phase(x, k1) - phase(x, k2) + phase(x, np.zeros_like(k1))
        scale = max(1.0, float(np.max(np.abs(phase(x, k1 + k2)))))
        if np.max(np.abs(gap)) > LINEARITY_TOL * scale:
            raise SymbolError(f"{phase.name} is not linear in k (defect {np.max(np.abs(gap)):.2e})")


def _amplitude(sigma: SymbolSpec, phases: Sequence[PhaseSpec], x: np.ndarray, cutoffs: Sequence[int]) -> np.ndarray:
    """sigma(x, k) prod exp(2 pi i Phi_i(x, k_i)), shape (P, M_1, .., M_r)."""
    d = x.shape[-1]
    r = len(cutoffs)
    lead = x.reshape((-1,) + (1,) * r + (d,))
    ks = []
    for slot, cutoff in enumerate(cutoffs):
        shape = [1] * (r + 1)
        grid = frequencies(cutoff, d)
        shape[slot + 1] = grid.shape[0]
        ks.append(grid.reshape(tuple(shape) + (d,)))
    values = sigma(lead, *ks) * np.exp(2j * np.pi * joint_phase(phases, lead, ks))
    full = (lead.shape[0],) + tuple(k.shape[slot + 1] for slot, k in enumerate(ks))
    return np.broadcast_to(values, full)


def torus_fio_eval(
    sigma: SymbolSpec, phases: Sequence[PhaseSpec], signals: Sequence[TorusSignal], points: np.ndarray
) -> np.ndarray:
    """sum_k exp(2 pi i sum Phi_i(x, k_i)) sigma(x, k) prod c_i(k_i) at arbitrary points."""
    points = np.asarray(points, dtype=float)
    if len(signals) != sigma.arity:
        raise SymbolError(f"{sigma.name} takes {sigma.arity} signals, got {len(signals)}")
    d = points.shape[-1]
    if any(s.dim != d for s in signals):
        raise GridError("signal dimensions do not match the evaluation points")
    _check_problem(sigma, phases, d)
    out = _amplitude(sigma, phases, points.reshape(-1, d), [s.cutoff for s in signals])
    for signal in reversed(signals):
        out = out @ signal.flat()
    return out.reshape(points.shape[:-1])


def torus_fio_apply(
    sigma: SymbolSpec, phases: Sequence[PhaseSpec], signals: Sequence[TorusSignal], grid: UniformGrid
) -> SampledField:
    _require_torus_grid(grid)
    return SampledField((grid,), torus_fio_eval(sigma, phases, signals, grid.points()))


def torus_kernel(sigma: SymbolSpec, phases: Sequence[PhaseSpec], cutoff: int, grid: UniformGrid) -> SampledField:
    """K(x, y) = sum_{|k_i| <= F} exp(2 pi i [sum Phi_i(x, k_i) - sum k_i.y_i]) sigma(x, k)."""
    _require_torus_grid(grid)
    if grid.n < 2 * cutoff + 1:
        raise GridError(f"y grid with {grid.n} points under-resolves cutoff {cutoff} (need {2 * cutoff + 1})")
    d = grid.dim
    _check_problem(sigma, phases, d)
    r = sigma.arity
    y = grid.points().reshape(-1, d)
    characters = np.exp(-2j * np.pi * frequencies(cutoff, d) @ y.T)
    out = _amplitude(sigma, phases, y, [cutoff] * r)
    for axis in range(r, 0, -1):
        out = np.moveaxis(np.tensordot(out, characters, axes=([axis], [0])), -1, axis)
    return SampledField((grid,) * (r + 1), out.reshape(grid.shape * (r + 1)))


def torus_bk_apply(K: SampledField, signals: Sequence[TorusSignal]) -> SampledField:
    """Apply a sampled torus kernel to trigonometric polynomials sampled on its grid."""
    grid = K.blocks[0]
    return bk_apply(KernelField(K), *(s.samples(grid) for s in signals))


def dirichlet_kernel(t: np.ndarray, cutoff: int) -> np.ndarray:
    """sum_{|k| <= F} exp(2 pi i k t) in closed form, 2F+1 at integers."""
    t = np.asarray(t, dtype=float)
    denominator = np.sin(np.pi * t)
    near_integer = np.abs(denominator) < 1e-12
    safe = np.where(near_integer, 1.0, denominator)
    return np.where(near_integer, 2 * cutoff + 1.0, np.sin(np.pi * (2 * cutoff + 1) * t) / safe)


# -----------------------------
# Modulation norms on the torus
# -----------------------------


def _torus_stft(coeffs: np.ndarray, window: np.ndarray, n: int) -> np.ndarray:
    """V_g f(w, m) = sum_l c_{m+l} conj(d_l) exp(2 pi i l.w) on an n^D grid of w.

    Returns shape (w points, m points) with m over [-(F+G), F+G]^D.
    """
    D = coeffs.ndim
    F = (coeffs.shape[0] - 1) // 2
    G = (window.shape[0] - 1) // 2
    reach = F + G
    padded = np.pad(coeffs, G + reach - F) if reach > 0 else coeffs
    ls = frequencies(G, D).astype(int)
    w = UniformGrid(D, n, 0.5).points().reshape(-1, D)
    characters = np.exp(2j * np.pi * w @ ls.T)
    m_count = 2 * reach + 1
    columns = []
    for l, d_l in zip(ls, window.reshape(-1)):
        # padded index of c_{m+l} for m = -reach: -reach + l + (G + reach)
        start = [G + v for v in l]
        sl = tuple(slice(s, s + m_count) for s in start)
        columns.append(padded[sl].reshape(-1) * np.conj(d_l))
    products = np.stack(columns, axis=0)
    return characters @ products


def torus_mixed_norm(values: np.ndarray, p: float, q: float) -> float:
    """Inner l^p over m, outer L^q over w by a Riemann sum on the unit cube."""
    magnitude = np.abs(values)
    if np.isinf(p):
        inner = magnitude.max(axis=1)
    else:
        inner = np.sum(magnitude ** p, axis=1) ** (1.0 / p)
    if np.isinf(q):
        return float(inner.max(initial=0.0))
    return float(np.mean(inner ** q) ** (1.0 / q))


def _grid_points_for(window_cutoff: int, n: Optional[int]) -> int:
    # |V|^2 carries frequencies up to 2G in w
    needed = 2 * window_cutoff + 2
    n = n or max(needed, 8)
    if n < 2 * window_cutoff + 1:
        raise GridError(f"{n} points per axis cannot resolve a window of cutoff {window_cutoff}")
    return n + n % 2


def torus_modulation_norm(f: TorusSignal, g: TorusSignal, p: float, q: float, n: Optional[int] = None) -> float:
    """||V_g f||_{L^{p,q}(T^d x Z^d)}, exact up to the Riemann sum in w."""
    if g.l2_norm == 0.0:
        raise GridError("torus window is identically zero")
    if f.dim != g.dim:
        raise GridError(f"signal dimension {f.dim} differs from window dimension {g.dim}")
    points = _grid_points_for(g.cutoff, n)
    return torus_mixed_norm(_torus_stft(f.coeffs, g.coeffs, points), p, q)


def _product_window(window: TorusSignal, copies: int) -> np.ndarray:
    out = np.ones(())
    for _ in range(copies):
        out = np.multiply.outer(out, window.coeffs)
    return out


def _coefficients_on_grid(values: np.ndarray, grid_n: int, cutoff: int) -> np.ndarray:
    """Fourier coefficients |k_j| <= cutoff of samples on the product torus grid."""
    D = values.ndim
    blocks = (UniformGrid(1, grid_n, 0.5),) * D
    spectrum = dft(SampledField(blocks, values)).data
    start = grid_n // 2 - cutoff
    return spectrum[tuple(slice(start, start + 2 * cutoff + 1) for _ in range(D))]


@dataclass
class SymbolKernelReport:
    """M^1-type norms of sigma_0 and of its kernel at one or more cutoffs."""

    cutoffs: List[int]
    symbol_norms: List[float]
    kernel_norms: List[float]
    ratios: List[Optional[float]]
    stable: bool
    finite: bool
    notes: Tuple[str, ...] = ()


def symbol_kernel_norms(
    sigma: SymbolSpec, phases: Sequence[PhaseSpec], cutoff: int, window_cutoff: int = 3, n: Optional[int] = None
) -> Tuple[float, float]:
    """(sum_k ||sigma_0(., k)||_{M^1(T^d)}, ||K||_{M^1(T^{d(r+1)})}) with Gaussian windows."""
    n = n or max(16, 4 * cutoff)
    n += n % 2
    grid = torus_grid(n)
    d = grid.dim
    r = sigma.arity
    x_cutoff = n // 2 - 1
    window = torus_gaussian_window(window_cutoff, d)
    amplitude = _amplitude(sigma, phases, grid.points().reshape(-1, d), [cutoff] * r)
    amplitude = amplitude.reshape((n,) + amplitude.shape[1:])
    points = max(4 * (2 * window_cutoff + 1), 16)
    symbol_norm = 0.0
    for index in np.ndindex(*amplitude.shape[1:]):
        column = amplitude[(slice(None),) + index]
        if not np.any(column):
            continue
        coeffs = _coefficients_on_grid(column, n, x_cutoff)
        symbol_norm += torus_mixed_norm(_torus_stft(coeffs, window.coeffs, points), 1, 1)
    kernel = torus_kernel(sigma, phases, cutoff, grid).data
    kernel_coeffs = _coefficients_on_grid(kernel, n, x_cutoff)
    kernel_norm = torus_mixed_norm(_torus_stft(kernel_coeffs, _product_window(window, r + 1), points), 1, 1)
    return symbol_norm, kernel_norm


def check_kernel_symbol_m1(
    sigma: SymbolSpec,
    phases: Sequence[PhaseSpec],
    cutoff: int,
    window_cutoff: int = 3,
    tolerance: float = 0.1,
) -> SymbolKernelReport:
    """Compare the M^1 norms of sigma_0 and K at the cutoff and at twice the cutoff.

    One-dimensional torus only: both norms are taken on torus_grid(n) with d = 1.
    The symbol side is a surrogate for the M^1 norm on T x Z^r: it is the sum over
    the frequency indices k of the M^1(T) norms of sigma_0(., k), so only the
    ratio's stability under doubling the cutoff is checked, never its value.
    """
    _check_problem(sigma, phases, 1)
    cutoffs = [cutoff, 2 * cutoff]
    symbol_norms, kernel_norms, ratios = [], [], []
    for F in cutoffs:
        s_norm, k_norm = symbol_kernel_norms(sigma, phases, F, window_cutoff)
        symbol_norms.append(s_norm)
        kernel_norms.append(k_norm)
        ratios.append(k_norm / s_norm if s_norm > 0 else None)
    finite = all(np.isfinite(symbol_norms)) and all(np.isfinite(kernel_norms))
    if ratios[0] is None or ratios[1] is None:
        stable = all(v == 0.0 for v in symbol_norms + kernel_norms)
    else:
        stable = abs(ratios[1] - ratios[0]) <= tolerance * abs(ratios[0])
    if not stable:
        logger.warning("kernel/symbol M^1 ratio moved from %s to %s when the cutoff doubled", ratios[0], ratios[1])
    notes = (
        "symbol norm is a surrogate: the sum over k of the M^1(T) norms of sigma_0(., k)",
        "d = 1 only",
    )
    return SymbolKernelReport(cutoffs, symbol_norms, kernel_norms, ratios, stable, finite, notes)
