"""Short-time Fourier transform, mixed norms and nested sequence norms."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from grid_core import GridError, SampledField, UniformGrid, dft, l2_norm
from lattice import CoefficientTensor
from weights import Weight, lattice_weight

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StftField:
    """V_g f sampled on (time grid) x (frequency grid)."""

    values: np.ndarray = field(repr=False)
    time_grid: UniformGrid
    freq_grid: UniformGrid
    window_norm: float

    def __post_init__(self) -> None:
        expected = self.time_grid.shape + self.freq_grid.shape
        if self.values.shape != expected:
            raise GridError(f"STFT values have shape {self.values.shape}, grids imply {expected}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("STFT contains NaN or Inf")


@dataclass(frozen=True)
class NestedNormSpec:
    """Iterated l^p norms; index_order lists the outermost index first."""

    index_order: Tuple[str, ...]
    exponents: Tuple[float, ...]
    weights: Tuple[Optional[Weight], ...] = ()

    def __post_init__(self) -> None:
        order = tuple(self.index_order)
        exps = tuple(float(e) for e in self.exponents)
        weights = tuple(self.weights) or (None,) * len(order)
        if len(order) != len(exps) or len(weights) != len(order):
            raise GridError(f"norm spec has {len(order)} indices, {len(exps)} exponents and {len(weights)} weights")
        if len(set(order)) != len(order):
            raise GridError(f"norm spec repeats an index: {order}")
        for e in exps:
            if not (e >= 1.0):
                raise GridError(f"exponent {e} outside [1, inf]")
        object.__setattr__(self, "index_order", order)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "weights", weights)


# -----------------------------
# STFT
# -----------------------------


def _time_steps(signal_grid: UniformGrid, time_grid: UniformGrid) -> np.ndarray:
    if time_grid.dim != signal_grid.dim:
        raise GridError(f"time grid dimension {time_grid.dim} differs from signal dimension {signal_grid.dim}")
    ratio = time_grid.axis() / signal_grid.spacing
    steps = np.rint(ratio)
    if np.any(np.abs(ratio - steps) > 1e-9 * np.maximum(1.0, np.abs(ratio))):
        raise GridError(f"time grid nodes are not on-grid translates (h={signal_grid.spacing})")
    return steps.astype(int)


def shifted_windows(g: SampledField, time_grid: UniformGrid) -> np.ndarray:
    """G[x, t] = g(t - x), zero outside the window grid; shape time_grid.shape + grid.shape."""
    grid = g.grid
    steps = _time_steps(grid, time_grid)
    d = grid.dim
    nodes = np.arange(grid.n)
    index = []
    valid = np.ones((1,) * (2 * d), dtype=bool)
    for k in range(d):
        shape = [1] * (2 * d)
        shape[k] = steps.size
        shape[d + k] = grid.n
        ix = (nodes[None, :] - steps[:, None]).reshape(shape)
        valid = valid & (ix >= 0) & (ix < grid.n)
        index.append(np.clip(ix, 0, grid.n - 1))
    return np.where(valid, g.data[tuple(index)], 0.0)


def _exponential_matrix(source: UniformGrid, target_axis: np.ndarray, sign: int) -> np.ndarray:
    return np.exp(sign * 2j * np.pi * np.outer(target_axis, source.axis())) * source.spacing


def _transform_last_block(data: np.ndarray, lead: UniformGrid, source: UniformGrid, target: UniformGrid) -> np.ndarray:
    """Forward Fourier transform of the trailing block from source onto target."""
    if target.matches(source.dual()):
        return dft(SampledField((lead, source), data), axes=[1]).data
    matrix = _exponential_matrix(source, target.axis(), -1)
    d = source.dim
    out = data
    for k in range(d):
        axis = lead.dim + k
        out = np.moveaxis(np.tensordot(out, matrix, axes=([axis], [1])), -1, axis)
    return out


def stft(f: SampledField, g: SampledField, out_grids: Optional[Tuple[UniformGrid, UniformGrid]] = None) -> StftField:
    """V_g f(x, xi) = sum_t f(t) conj(g(t - x)) exp(-2 pi i xi.t) h^d."""
    grid = f.grid
    if not g.grid.matches(grid):
        raise GridError("signal and window live on different grids")
    norm = l2_norm(g)
    if norm == 0.0:
        raise GridError("window is identically zero")
    time_grid, freq_grid = out_grids or (grid, grid.dual())
    windows = shifted_windows(g, time_grid)
    correlation = f.data[(None,) * grid.dim] * np.conj(windows)
    values = _transform_last_block(correlation, time_grid, grid, freq_grid)
    return StftField(values, time_grid, freq_grid, norm)


def stft_invert(F: StftField, g: SampledField) -> SampledField:
    """f(t) = |g|^-2 sum F(x, xi) exp(2 pi i xi.t) g(t - x) dx dxi."""
    grid = g.grid
    if F.time_grid.dim != grid.dim or F.freq_grid.dim != grid.dim:
        raise GridError("STFT grids do not match the window grid")
    if F.freq_grid.matches(grid.dual()):
        local = dft(SampledField((F.time_grid, F.freq_grid), F.values), axes=[1], sign=1)
        if not local.blocks[1].matches(grid):
            raise GridError("STFT frequency grid is not dual to the window grid")
        correlation = local.data
    else:
        matrix = _exponential_matrix(F.freq_grid, grid.axis(), sign=1)
        correlation = F.values
        for k in range(grid.dim):
            axis = F.time_grid.dim + k
            correlation = np.moveaxis(np.tensordot(correlation, matrix, axes=([axis], [1])), -1, axis)
    windows = shifted_windows(g, F.time_grid)
    summed = np.sum(correlation * windows, axis=tuple(range(F.time_grid.dim))) * F.time_grid.cell
    return SampledField((grid,), summed / F.window_norm ** 2)


# -----------------------------
# Mixed norms
# -----------------------------


def _reduce(values: np.ndarray, p: float, axes: Tuple[int, ...], cell: float = 1.0) -> np.ndarray:
    if np.isinf(p):
        return values.max(axis=axes, initial=0.0)
    return (np.sum(values ** p, axis=axes) * cell) ** (1.0 / p)


def mixed_norm(
    F: Union[StftField, CoefficientTensor],
    p: float,
    q: float,
    v: Optional[Weight] = None,
) -> float:
    """Inner L^p over time (or m), outer L^q over frequency (or n), weighted by v."""
    for e in (p, q):
        if not e >= 1.0:
            raise GridError(f"exponent {e} outside [1, inf]")
    if isinstance(F, StftField):
        d = F.time_grid.dim
        magnitude = np.abs(F.values)
        if v is not None:
            if v.dim != 2 * d:
                raise GridError(f"weight lives on R^{v.dim}, phase space is R^{2 * d}")
            x = F.time_grid.points().reshape(F.time_grid.shape + (1,) * d + (d,))
            xi = F.freq_grid.points().reshape((1,) * d + F.freq_grid.shape + (d,))
            magnitude = magnitude * lattice_weight(v, [x, xi])
        inner = _reduce(magnitude, p, tuple(range(d)), F.time_grid.cell)
        return float(_reduce(inner, q, tuple(range(d)), F.freq_grid.cell))
    if F.entries.ndim != 2:
        raise GridError(f"mixed norm needs an (m, n) tensor, got indices {F.index_names}")
    magnitude = np.abs(F.entries)
    if v is not None:
        if v.dim != 2 * F.dim:
            raise GridError(f"weight lives on R^{v.dim}, lattice is in R^{2 * F.dim}")
        m_pts = F.indices[0][:, None, :] * F.steps[0]
        n_pts = F.indices[1][None, :, :] * F.steps[1]
        magnitude = magnitude * lattice_weight(v, [m_pts, n_pts])
    inner = _reduce(magnitude, p, (0,))
    return float(_reduce(inner, q, (0,)))


def modulation_norm(
    f: SampledField,
    g: SampledField,
    p: float,
    q: float,
    v: Optional[Weight] = None,
    out_grids: Optional[Tuple[UniformGrid, UniformGrid]] = None,
) -> float:
    """Window-dependent surrogate of the M^{p,q}_v norm."""
    return mixed_norm(stft(f, g, out_grids), p, q, v)


def window_equivalence(
    signals: Sequence[SampledField],
    g1: SampledField,
    g2: SampledField,
    p: float,
    q: float,
    v: Optional[Weight] = None,
) -> Tuple[float, float]:
    """Smallest and largest ratio of the two window norms over the signals."""
    ratios: List[float] = []
    for f in signals:
        denominator = modulation_norm(f, g2, p, q, v)
        if denominator == 0.0:
            continue
        ratios.append(modulation_norm(f, g1, p, q, v) / denominator)
    if not ratios:
        raise GridError("no signal with a nonzero norm")
    logger.debug("window equivalence over %d signals: [%.4g, %.4g]", len(ratios), min(ratios), max(ratios))
    return min(ratios), max(ratios)


# -----------------------------
# Nested norms
# -----------------------------


def nested_mixed_norm(T: CoefficientTensor, spec: NestedNormSpec) -> float:
    """Iterated norm: the last index in spec.index_order is reduced first."""
    if sorted(spec.index_order) != sorted(T.index_names):
        raise GridError(f"norm spec covers {spec.index_order}, tensor has {T.index_names}")
    perm = [T.axis(name) for name in spec.index_order]
    values = np.abs(np.transpose(T.entries, perm))
    for position, (name, w) in enumerate(zip(spec.index_order, spec.weights)):
        if w is None:
            continue
        shape = [1] * values.ndim
        shape[position] = values.shape[position]
        values = values * w(T.points(name)).reshape(shape)
    for e in reversed(spec.exponents):
        values = _reduce(values, e, (values.ndim - 1,))
    return float(values)
