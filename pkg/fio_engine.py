"""Multilinear Fourier integral operators by direct quadrature, their kernels and Gabor matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from gabor import GaborSystem, pair_names, with_radius
from grid_core import GridError, SampledField, UniformGrid, block_coordinates, dft, idft
from lattice import CoefficientTensor, PhaseSpaceLattice
from symbols import PhaseSpec, SymbolError, SymbolSpec, joint_phase, linear

logger = logging.getLogger(__name__)

# Complex entries of the operator tensor materialized per chunk of x rows.
CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class FioProblem:
    """T_sigma with phases Phi_1..Phi_r on an x grid; frequencies live on its dual."""

    symbol: SymbolSpec
    phases: Tuple[PhaseSpec, ...]
    grid: UniformGrid

    def __post_init__(self) -> None:
        phases = tuple(self.phases)
        if len(phases) != self.symbol.arity:
            raise SymbolError(f"{self.symbol.name} has arity {self.symbol.arity} but {len(phases)} phases were given")
        if self.symbol.integer_frequencies:
            raise SymbolError(f"{self.symbol.name} is a torus symbol; use the torus engine")
        object.__setattr__(self, "phases", phases)

    @property
    def arity(self) -> int:
        return self.symbol.arity

    @property
    def freq_grid(self) -> UniformGrid:
        return self.grid.dual()

    @property
    def grids(self) -> Tuple[UniformGrid, ...]:
        return (self.grid,) + (self.freq_grid,) * self.arity

    @property
    def separable_linear(self) -> bool:
        return self.symbol.factors is not None and all(p.standard for p in self.phases)


@dataclass(frozen=True, eq=False)
class KernelField:
    """K(x, y_1, .., y_r) sampled on r + 1 copies of the x grid."""

    data: SampledField

    @property
    def arity(self) -> int:
        return len(self.data.blocks) - 1

    @property
    def grid(self) -> UniformGrid:
        return self.data.blocks[0]


def fio_problem(symbol: SymbolSpec, phases: Sequence[PhaseSpec], grid: UniformGrid) -> FioProblem:
    return FioProblem(symbol, tuple(phases), grid)


def _check_inputs(grid: UniformGrid, arity: int, fs: Sequence[SampledField]) -> None:
    if len(fs) != arity:
        raise SymbolError(f"operator takes {arity} inputs, got {len(fs)}")
    for f in fs:
        if len(f.blocks) != 1 or not f.grid.matches(grid):
            raise GridError("input is not sampled on the operator's x grid")


# -----------------------------
# Operator tensor
# -----------------------------


def _operator_chunks(p: FioProblem) -> Iterator[Tuple[slice, np.ndarray]]:
    """sigma(x, xi) exp(2 pi i sum Phi_i) over slabs of the first x axis."""
    coords = block_coordinates(p.grids)
    full_shape = tuple(n for g in p.grids for n in g.shape)
    n = p.grid.n
    per_row = int(np.prod(full_shape[1:]))
    rows = max(1, CHUNK_ELEMENTS // per_row)
    for start in range(0, n, rows):
        rows_slice = slice(start, min(n, start + rows))
        x = coords[0][rows_slice]
        xis = coords[1:]
        phase = joint_phase(p.phases, x, xis)
        values = p.symbol(x, *xis) * np.exp(2j * np.pi * phase)
        shape = (rows_slice.stop - rows_slice.start,) + full_shape[1:]
        yield rows_slice, np.broadcast_to(values, shape)


def operator_tensor(p: FioProblem) -> np.ndarray:
    """sigma_0(x, xi_1, .., xi_r) on the full product grid."""
    return np.concatenate([chunk for _, chunk in _operator_chunks(p)], axis=0)


def _contract_trailing(data: np.ndarray, vectors: Sequence[np.ndarray], d: int, weight: float) -> np.ndarray:
    """Sum the trailing blocks of data against vectors[-1], then vectors[-2], ..."""
    out = data
    for v in reversed(vectors):
        axes = list(range(out.ndim - d, out.ndim))
        out = np.tensordot(out, v, axes=(axes, list(range(d)))) * weight
    return out


# -----------------------------
# Operators
# -----------------------------


def _fast_apply(p: FioProblem, fs: Sequence[SampledField]) -> SampledField:
    x_coords = p.grid.points()
    xi_coords = p.freq_grid.points()
    out = np.array(p.symbol.factors[0](x_coords), dtype=complex)
    for factor, f in zip(p.symbol.factors[1:], fs):
        spectrum = dft(f)
        out = out * idft(spectrum.with_data(factor(xi_coords) * spectrum.data)).data
    return SampledField((p.grid,), out)


def fio_apply(p: FioProblem, *fs: SampledField, fast: Optional[bool] = None) -> SampledField:
    """T f(x) = sum_xi exp(2 pi i sum Phi_i(x, xi_i)) sigma(x, xi) prod f_i^(xi_i) dxi.

    fast=None takes the product-of-inverse-transforms path whenever every phase
    is x.xi and the symbol is separable; fast=False forces direct summation.
    """
    _check_inputs(p.grid, p.arity, fs)
    use_fast = p.separable_linear if fast is None else fast
    if use_fast:
        if not p.separable_linear:
            raise SymbolError("fast path needs a separable symbol and phases x.xi")
        return _fast_apply(p, fs)
    spectra = [dft(f).data for f in fs]
    d = p.grid.dim
    out = np.zeros(p.grid.shape, dtype=complex)
    for rows, chunk in _operator_chunks(p):
        out[rows] = _contract_trailing(chunk, spectra, d, p.freq_grid.cell)
    return SampledField((p.grid,), out)


def pdo_apply(sigma: SymbolSpec, f: SampledField, g: SampledField) -> SampledField:
    """Bilinear pseudo-differential operator, always by direct summation."""
    if sigma.arity != 2:
        raise SymbolError(f"bilinear operator needs a symbol of arity 2, {sigma.name} has {sigma.arity}")
    p = FioProblem(sigma, (linear(), linear()), f.grid)
    return fio_apply(p, f, g, fast=False)


def kernel_from_symbol(p: FioProblem) -> KernelField:
    """K(x, y) = sum_xi sigma_0(x, xi) exp(-2 pi i y.xi) dxi on every frequency block."""
    field = SampledField(p.grids, operator_tensor(p))
    return KernelField(dft(field, axes=range(1, p.arity + 1)))


def bk_apply(K: KernelField, *fs: SampledField) -> SampledField:
    """B_K f(x) = sum_y K(x, y_1..y_r) prod f_i(y_i) h^(dr)."""
    for block in K.data.blocks[1:]:
        if not block.matches(K.grid):
            raise GridError("kernel blocks are not sampled on the same grid")
    _check_inputs(K.grid, K.arity, fs)
    grid = K.grid
    out = _contract_trailing(K.data.data, [f.data for f in fs], grid.dim, grid.cell)
    return SampledField((grid,), out)


# -----------------------------
# Gabor matrices
# -----------------------------


def _restricted(sys: GaborSystem, radius: Optional[int]) -> GaborSystem:
    if radius is None:
        return sys
    full = PhaseSpaceLattice.full(sys.grid, sys.alpha, sys.beta)
    reach = max(max(abs(v) for v in full.m_values), max(abs(v) for v in full.n_values))
    if radius > reach:
        raise GridError(f"truncation radius {radius} exceeds the lattice supported by the grid ({reach})")
    return with_radius(sys, radius, radius)


def _atom_spectra(sys: GaborSystem) -> np.ndarray:
    grid = sys.grid
    rows = [dft(SampledField((grid,), row.reshape(grid.shape))).data.reshape(-1) for row in sys.atoms]
    return np.array(rows)


def matrix_names(arity: int) -> Tuple[str, ...]:
    return ("m'", "n'") + tuple(pair_names(arity))


def _contract_with_atoms(
    source: np.ndarray, out_atoms: np.ndarray, in_rows: np.ndarray, arity: int, x_weight: float, in_weight: float
) -> np.ndarray:
    size = out_atoms.shape[1]
    out = (np.conj(out_atoms) @ source.reshape(size, -1)) * x_weight
    out = out.reshape((out_atoms.shape[0],) + (in_rows.shape[1],) * arity)
    for axis in range(arity, 0, -1):
        out = np.tensordot(out, in_rows, axes=([axis], [1])) * in_weight
    # tensordot appended the input axes last-slot first
    order = [0] + list(range(out.ndim - 1, 0, -1))
    return np.transpose(out, order)


def gabor_matrix(
    source: Union[FioProblem, KernelField],
    sys: GaborSystem,
    out_radius: Optional[int] = None,
    in_radius: Optional[int] = None,
    fast: Optional[bool] = None,
) -> CoefficientTensor:
    """b[m', n', m, n, ..] = <T(g_mn, ..), g_m'n'> for the atoms of sys."""
    out_sys = _restricted(sys, out_radius)
    in_sys = _restricted(sys, in_radius)
    grid = sys.grid
    arity = source.arity
    out_atoms = out_sys.atoms
    if isinstance(source, KernelField):
        if not source.grid.matches(grid):
            raise GridError("kernel and Gabor system live on different grids")
        flat = _contract_with_atoms(source.data.data, out_atoms, in_sys.atoms, arity, grid.cell, grid.cell)
    else:
        if not source.grid.matches(grid):
            raise GridError("operator and Gabor system live on different grids")
        use_fast = source.separable_linear if fast is None else fast
        if use_fast:
            flat = _separable_matrix(source, out_atoms, in_sys)
        else:
            spectra = _atom_spectra(in_sys)
            flat = _contract_with_atoms(operator_tensor(source), out_atoms, spectra, arity, grid.cell, source.freq_grid.cell)
    lm_out, ln_out = out_sys.shape
    lm_in, ln_in = in_sys.shape
    entries = flat.reshape((lm_out, ln_out) + (lm_in, ln_in) * arity)
    indices = (out_sys.lattice.m_indices(), out_sys.lattice.n_indices())
    indices += (in_sys.lattice.m_indices(), in_sys.lattice.n_indices()) * arity
    steps = (sys.alpha, sys.beta) * (arity + 1)
    logger.debug("Gabor matrix with shape %s", entries.shape)
    return CoefficientTensor(entries, matrix_names(arity), indices, steps)


def _separable_matrix(p: FioProblem, out_atoms: np.ndarray, in_sys: GaborSystem) -> np.ndarray:
    """a(x) prod u_k(x) with u_k the inverse transform of b_k times the atom spectrum."""
    if not p.separable_linear:
        raise SymbolError("fast Gabor matrix needs a separable symbol and phases x.xi")
    grid = p.grid
    xi = p.freq_grid.points().reshape(-1, grid.dim)
    spectra = _atom_spectra(in_sys)
    a = p.symbol.factors[0](grid.points().reshape(-1, grid.dim))
    weighted = np.conj(out_atoms) * a[None, :] * grid.cell
    inverse = np.exp(2j * np.pi * grid.points().reshape(-1, grid.dim) @ xi.T) * p.freq_grid.cell
    factors = [(spectra * factor(xi)[None, :]) @ inverse.T for factor in p.symbol.factors[1:]]
    letters = "pqrstuvw"[: p.arity]
    subscripts = "ox," + ",".join(f"{c}x" for c in letters) + "->o" + letters
    return np.einsum(subscripts, weighted, *factors, optimize=True)


def matrix_apply(a: CoefficientTensor, *cs: CoefficientTensor) -> CoefficientTensor:
    """(O c)_{m', n'} = sum a[m', n', m_1, n_1, ..] prod c_k[m_k, n_k]."""
    arity = len(cs)
    if arity == 0 or a.entries.ndim != 2 * (arity + 1):
        raise GridError(f"matrix with indices {a.index_names} cannot take {arity} coefficient tensors")
    for k, c in enumerate(cs):
        if c.entries.ndim != 2:
            raise GridError(f"coefficient tensor {k} has indices {c.index_names}, expected one (m, n) pair")
        for offset in range(2):
            axis = 2 + 2 * k + offset
            if not np.array_equal(a.indices[axis], c.indices[offset]) or a.steps[axis] != c.steps[offset]:
                raise GridError(f"index range of {a.index_names[axis]} does not match coefficient tensor {k}")
    out = a.entries
    for c in reversed(cs):
        out = np.tensordot(out, c.entries, axes=([out.ndim - 2, out.ndim - 1], [0, 1]))
    return CoefficientTensor(out, ("m", "n"), a.indices[:2], a.steps[:2])


def apply_to_atoms(p: FioProblem, sys: GaborSystem, atom_indices: Sequence[Tuple[Sequence[int], Sequence[int]]]) -> SampledField:
    """T applied to a tuple of atoms g_{m_k, n_k}."""
    atoms: List[SampledField] = [sys.atom(m, n) for m, n in atom_indices]
    return fio_apply(p, *atoms)
