"""Gabor systems on the periodized grid: analysis, synthesis, frame operator and dual windows."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh, eigvalsh
from scipy.sparse.linalg import LinearOperator, cg

from grid_core import GridError, SampledField, UniformGrid, l2_norm, translate_data
from lattice import CoefficientTensor, PhaseSpaceLattice
from utils import seeded_rng

logger = logging.getLogger(__name__)

# Lower frame bound (relative to the upper one) below which a system is not treated as a frame.
MIN_RELATIVE_BOUND = 1e-6


class FrameError(ValueError):
    """Raised when a Gabor system is not a frame at the working truncation."""


def pair_names(count: int) -> List[str]:
    """Axis names of `count` (m, n) pairs: (m, n), (m, n, m0, n0), then m1, n1, m2, ..."""
    if count == 1:
        return ["m", "n"]
    if count == 2:
        return ["m", "n", "m0", "n0"]
    return [name for k in range(1, count + 1) for name in (f"m{k}", f"n{k}")]


@dataclass(frozen=True, eq=False)
class GaborSystem:
    """Atoms M_{beta n} T_{alpha m} g, translations taken periodically on the grid."""

    window: SampledField
    lattice: PhaseSpaceLattice

    def __post_init__(self) -> None:
        grid = self.window.grid
        if grid.dim != self.lattice.dim:
            raise GridError(f"window dimension {grid.dim} differs from lattice dimension {self.lattice.dim}")
        if l2_norm(self.window) == 0.0:
            raise GridError("Gabor window is identically zero")

    @property
    def grid(self) -> UniformGrid:
        return self.window.grid

    @property
    def alpha(self) -> float:
        return self.lattice.alpha

    @property
    def beta(self) -> float:
        return self.lattice.beta

    @property
    def m_range(self) -> Tuple[int, int]:
        return self.lattice.m_values[0], self.lattice.m_values[-1]

    @property
    def n_range(self) -> Tuple[int, int]:
        return self.lattice.n_values[0], self.lattice.n_values[-1]

    @cached_property
    def atoms(self) -> np.ndarray:
        """Atom samples, shape (len(m) * len(n), N^d), rows in (m, n) order."""
        grid = self.grid
        step = int(round(self.alpha / grid.spacing))
        points = grid.points().reshape(-1, grid.dim)
        chirps = np.exp(2j * np.pi * self.beta * (self.lattice.n_indices() @ points.T))
        rows = []
        for m in self.lattice.m_indices():
            moved = translate_data(np.array(self.window.data), m * step, periodic=True).reshape(-1)
            rows.append(chirps * moved[None, :])
        return np.concatenate(rows, axis=0)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.lattice.m_indices()), len(self.lattice.n_indices())

    def atom(self, m: Sequence[int], n: Sequence[int]) -> SampledField:
        m_pos = int(np.flatnonzero(np.all(self.lattice.m_indices() == np.asarray(m), axis=1))[0])
        n_pos = int(np.flatnonzero(np.all(self.lattice.n_indices() == np.asarray(n), axis=1))[0])
        row = self.atoms[m_pos * self.shape[1] + n_pos]
        return SampledField((self.grid,), row.reshape(self.grid.shape))

    def with_window(self, window: SampledField) -> "GaborSystem":
        return GaborSystem(window, self.lattice)


def gabor_system(
    window: SampledField,
    alpha: float,
    beta: float,
    m_radius: Optional[int] = None,
    n_radius: Optional[int] = None,
) -> GaborSystem:
    lattice = PhaseSpaceLattice.full(window.grid, alpha, beta).restricted(m_radius, n_radius)
    return GaborSystem(window, lattice)


def with_radius(sys: GaborSystem, m_radius: Optional[int], n_radius: Optional[int]) -> GaborSystem:
    full = PhaseSpaceLattice.full(sys.grid, sys.alpha, sys.beta)
    return GaborSystem(sys.window, full.restricted(m_radius, n_radius))


# -----------------------------
# Analysis and synthesis
# -----------------------------


def _pair_axes(sys: GaborSystem, count: int):
    names = pair_names(count)
    indices, steps = [], []
    for _ in range(count):
        indices += [sys.lattice.m_indices(), sys.lattice.n_indices()]
        steps += [sys.alpha, sys.beta]
    return tuple(names), tuple(indices), tuple(steps)


def coefficients(sys: GaborSystem, f: SampledField) -> np.ndarray:
    """Flat vector of <f, g_{m,n}>."""
    if len(f.blocks) != 1 or not f.grid.matches(sys.grid):
        raise GridError("signal is not sampled on the Gabor system's grid")
    return np.conj(sys.atoms) @ f.data.reshape(-1) * sys.grid.cell


def analyze(sys: GaborSystem, *fs: SampledField) -> CoefficientTensor:
    """C_g f, or the outer product of C_g f_k for several arguments."""
    if not fs:
        raise GridError("analyze needs at least one signal")
    lm, ln = sys.shape
    entries = np.ones(())
    for f in fs:
        entries = np.multiply.outer(entries, coefficients(sys, f).reshape(lm, ln))
    names, indices, steps = _pair_axes(sys, len(fs))
    return CoefficientTensor(entries, names, indices, steps)


def synthesize(sys: GaborSystem, c: CoefficientTensor) -> SampledField:
    """D_g c; a tensor with k (m, n) pairs gives a field on k grid blocks."""
    lm, ln = sys.shape
    if c.entries.ndim % 2:
        raise GridError(f"coefficient tensor has an odd number of axes: {c.index_names}")
    count = c.entries.ndim // 2
    if c.entries.shape != (lm, ln) * count:
        raise GridError(f"coefficient shape {c.entries.shape} does not match the lattice {(lm, ln) * count}")
    data = c.entries.reshape((lm * ln,) * count)
    for axis in range(count):
        data = np.moveaxis(np.tensordot(data, sys.atoms, axes=([axis], [0])), -1, axis)
    grid = sys.grid
    return SampledField((grid,) * count, data.reshape(grid.shape * count))


def frame_operator(sys: GaborSystem, f: SampledField) -> SampledField:
    return synthesize(sys, analyze(sys, f))


def frame_matrix(sys: GaborSystem) -> np.ndarray:
    """Dense S with S f = sum <f, g_mn> g_mn on flattened samples."""
    return sys.atoms.T @ np.conj(sys.atoms) * sys.grid.cell


def frame_bounds(sys: GaborSystem) -> Tuple[float, float]:
    eigenvalues = eigvalsh(frame_matrix(sys))
    return float(max(eigenvalues[0], 0.0)), float(eigenvalues[-1])


def rayleigh_bounds(sys: GaborSystem, count: int = 50, seed: Optional[int] = None) -> Tuple[float, float]:
    """Extremal sampled values of sum |<f, g_mn>|^2 / |f|^2 over random signals."""
    rng = seeded_rng(seed)
    size = sys.grid.size
    quotients = []
    for _ in range(count):
        f = rng.normal(size=size) + 1j * rng.normal(size=size)
        c = np.conj(sys.atoms) @ f * sys.grid.cell
        quotients.append(np.sum(np.abs(c) ** 2) / (np.sum(np.abs(f) ** 2) * sys.grid.cell))
    return float(min(quotients)), float(max(quotients))


def _require_frame(sys: GaborSystem) -> Tuple[float, float]:
    if sys.lattice.density > 1.0 + 1e-12:
        raise FrameError(f"lattice density (alpha*beta)^d = {sys.lattice.density:.4g} exceeds 1")
    lower, upper = frame_bounds(sys)
    if lower <= MIN_RELATIVE_BOUND * upper:
        raise FrameError(f"lower frame bound {lower:.3e} is negligible against upper bound {upper:.3e}")
    return lower, upper


def _cg_solve(operator: LinearOperator, rhs: np.ndarray, atol: float, max_iter: int) -> Tuple[np.ndarray, int, int]:
    iterations = [0]

    def count(_):
        iterations[0] += 1

    try:
        solution, info = cg(operator, rhs, rtol=0.0, atol=atol, maxiter=max_iter, callback=count)
    except TypeError:  # scipy < 1.12
        solution, info = cg(operator, rhs, tol=0.0, atol=atol, maxiter=max_iter, callback=count)
    return solution, info, iterations[0]


def dual_window(sys: GaborSystem, tol: float = 1e-10, max_iter: int = 500) -> SampledField:
    """Canonical dual gamma = S^{-1} g by conjugate gradients."""
    _require_frame(sys)
    size = sys.grid.size
    cell = sys.grid.cell
    atoms = sys.atoms
    conj_atoms = np.conj(atoms)

    def apply_frame(x: np.ndarray) -> np.ndarray:
        return atoms.T @ (conj_atoms @ x.reshape(-1)) * cell

    operator = LinearOperator((size, size), matvec=apply_frame, dtype=complex)
    rhs = sys.window.data.reshape(-1)
    solution, info, iterations = _cg_solve(operator, rhs, tol / np.sqrt(cell), max_iter)
    residual = np.linalg.norm(apply_frame(solution) - rhs) * np.sqrt(cell)
    if info != 0 or residual > tol:
        raise FrameError(f"dual window did not converge: residual {residual:.3e} after {iterations} iterations")
    logger.info("dual window converged after %d iterations (residual %.2e)", iterations, residual)
    return SampledField((sys.grid,), solution.reshape(sys.grid.shape))


def dual_residual(sys: GaborSystem, gamma: SampledField) -> float:
    """||S gamma - g||_2."""
    image = frame_operator(sys, gamma)
    return l2_norm(image.with_data(image.data - sys.window.data))


def tighten(sys: GaborSystem) -> GaborSystem:
    """System with window S^{-1/2} g; its frame operator is the identity."""
    _require_frame(sys)
    eigenvalues, vectors = eigh(frame_matrix(sys))
    inverse_root = (vectors * eigenvalues ** -0.5) @ np.conj(vectors.T)
    window = inverse_root @ sys.window.data.reshape(-1)
    return sys.with_window(SampledField((sys.grid,), window.reshape(sys.grid.shape)))


# -----------------------------
# Bilinear system
# -----------------------------


def bilinear_frame_operator(
    sys: GaborSystem, f1: SampledField, f2: SampledField, conjugate_second: bool = True
) -> SampledField:
    """sum <f1, g_mn> c2 g_mn (x) g_m0n0 with c2 = conj(<f2, g_m0n0>) by default."""
    c1 = coefficients(sys, f1)
    c2 = coefficients(sys, f2)
    if conjugate_second:
        c2 = np.conj(c2)
    left = sys.atoms.T @ c1
    right = sys.atoms.T @ c2
    grid = sys.grid
    return SampledField((grid, grid), np.multiply.outer(left, right).reshape(grid.shape * 2))


def expand(sys: GaborSystem, dual: SampledField, f1: SampledField, f2: SampledField, coefficients_from: str = "window") -> SampledField:
    """Frame expansion of f1 (x) f2 in either order.

    coefficients_from="window": coefficients against g, atoms built from the dual;
    coefficients_from="dual": coefficients against the dual, atoms built from g.
    """
    dual_sys = sys.with_window(dual)
    if coefficients_from == "window":
        return synthesize(dual_sys, analyze(sys, f1, f2))
    if coefficients_from == "dual":
        return synthesize(sys, analyze(dual_sys, f1, f2))
    raise ValueError(f"coefficients_from must be 'window' or 'dual', got {coefficients_from!r}")
