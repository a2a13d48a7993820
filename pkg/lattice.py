"""The Gabor lattice alpha Z^d x beta Z^d and coefficient tensors indexed by it."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from grid_core import GridError, UniformGrid


def _integer_ratio(value: float, unit: float, what: str) -> int:
    ratio = value / unit
    rounded = int(round(ratio))
    if rounded < 1 or abs(ratio - rounded) > 1e-9 * max(1.0, ratio):
        raise GridError(f"{what}: {value} is not a positive integer multiple of {unit}")
    return rounded


@dataclass(frozen=True)
class PhaseSpaceLattice:
    """Truncated lattice with per-axis index ranges m_values and n_values."""

    alpha: float
    beta: float
    dim: int
    m_values: Tuple[int, ...]
    n_values: Tuple[int, ...]

    @classmethod
    def full(cls, grid: UniformGrid, alpha: float, beta: float) -> "PhaseSpaceLattice":
        """Every lattice point of the periodized grid: m in [-R/a, R/a), n in [-N/(4Rb), N/(4Rb))."""
        _integer_ratio(alpha, grid.spacing, "alpha")
        _integer_ratio(beta, grid.dual().spacing, "beta")
        m_count = _integer_ratio(2.0 * grid.half_width, alpha, "2R/alpha")
        n_count = _integer_ratio(2.0 * grid.dual().half_width, beta, "N/(2R beta)")
        if m_count % 2 or n_count % 2:
            raise GridError(f"lattice counts must be even, got {m_count} x {n_count}")
        m_values = tuple(range(-m_count // 2, m_count // 2))
        n_values = tuple(range(-n_count // 2, n_count // 2))
        return cls(float(alpha), float(beta), grid.dim, m_values, n_values)

    def restricted(self, m_radius: Optional[int] = None, n_radius: Optional[int] = None) -> "PhaseSpaceLattice":
        m_values = self.m_values if m_radius is None else tuple(m for m in self.m_values if abs(m) <= m_radius)
        n_values = self.n_values if n_radius is None else tuple(n for n in self.n_values if abs(n) <= n_radius)
        return PhaseSpaceLattice(self.alpha, self.beta, self.dim, m_values, n_values)

    def m_indices(self) -> np.ndarray:
        return np.array(list(itertools.product(self.m_values, repeat=self.dim)), dtype=int).reshape(-1, self.dim)

    def n_indices(self) -> np.ndarray:
        return np.array(list(itertools.product(self.n_values, repeat=self.dim)), dtype=int).reshape(-1, self.dim)

    @property
    def size(self) -> int:
        return (len(self.m_values) * len(self.n_values)) ** self.dim

    @property
    def density(self) -> float:
        return (self.alpha * self.beta) ** self.dim

    def point(self, m: Sequence[int], n: Sequence[int]) -> np.ndarray:
        return np.concatenate([self.alpha * np.asarray(m, dtype=float), self.beta * np.asarray(n, dtype=float)])


@dataclass(frozen=True, eq=False)
class CoefficientTensor:
    """Complex tensor with one axis per lattice index (each flattened over Z^d).

    indices[k] holds the integer multi-indices of axis k, shape (L_k, d), and
    steps[k] the lattice constant (alpha or beta) turning them into points.
    """

    entries: np.ndarray = field(repr=False)
    index_names: Tuple[str, ...]
    indices: Tuple[np.ndarray, ...] = field(repr=False)
    steps: Tuple[float, ...]

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.complex128)
        names = tuple(self.index_names)
        indices = tuple(np.asarray(ix, dtype=int).reshape(len(ix), -1) for ix in self.indices)
        steps = tuple(float(s) for s in self.steps)
        if not (entries.ndim == len(names) == len(indices) == len(steps)):
            raise GridError(f"tensor rank {entries.ndim} disagrees with index metadata for {names}")
        if len(set(names)) != len(names):
            raise GridError(f"duplicate index names in {names}")
        for axis, ix in enumerate(indices):
            if entries.shape[axis] != ix.shape[0]:
                raise GridError(f"axis {names[axis]} has {entries.shape[axis]} entries but {ix.shape[0]} indices")
        if not np.all(np.isfinite(entries)):
            raise GridError("coefficient tensor contains NaN or Inf")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "index_names", names)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "steps", steps)

    @property
    def dim(self) -> int:
        return self.indices[0].shape[1]

    def axis(self, name: str) -> int:
        try:
            return self.index_names.index(name)
        except ValueError as exc:
            raise GridError(f"unknown index {name!r}; tensor has {self.index_names}") from exc

    def points(self, name: str) -> np.ndarray:
        k = self.axis(name)
        return self.indices[k] * self.steps[k]

    def position(self, name: str, multi_index: Sequence[int]) -> int:
        k = self.axis(name)
        hits = np.flatnonzero(np.all(self.indices[k] == np.asarray(multi_index, dtype=int), axis=1))
        if hits.size == 0:
            raise GridError(f"index {list(multi_index)} outside the range of {name}")
        return int(hits[0])

    def with_entries(self, entries: np.ndarray) -> "CoefficientTensor":
        return CoefficientTensor(entries, self.index_names, self.indices, self.steps)

    def metadata(self) -> Dict[str, Tuple[int, float]]:
        return {name: (len(ix), step) for name, ix, step in zip(self.index_names, self.indices, self.steps)}
