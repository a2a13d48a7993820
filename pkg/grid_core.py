"""Uniform grids, sampled fields, Riemann-sum Fourier transforms and time-frequency shifts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft as sp_fft

from utils import atomic_write

logger = logging.getLogger(__name__)

# Relative slack when deciding that a translation lands on a grid node.
ON_GRID_TOL = 1e-9


class GridError(ValueError):
    """Raised for grid mismatches, off-grid shifts and malformed fields."""


# -----------------------------
# Grids
# -----------------------------


@dataclass(frozen=True)
class UniformGrid:
    """The half-open cube [-R, R)^d sampled with N points per axis."""

    dim: int
    n: int
    half_width: float

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 1:
            raise GridError(f"grid dimension must be a positive integer, got {self.dim}")
        if int(self.n) != self.n or self.n < 2:
            raise GridError(f"points per axis must be an integer >= 2, got {self.n}")
        if not np.isfinite(self.half_width) or self.half_width <= 0:
            raise GridError(f"half width must be positive, got {self.half_width}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell(self) -> float:
        """Quadrature weight h^d of one grid cell."""
        return self.spacing ** self.dim

    def axis(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n) * self.spacing

    def points(self) -> np.ndarray:
        """Coordinates with shape (N,)*d + (d,)."""
        axes = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def dual(self) -> "UniformGrid":
        """Frequency grid: spacing 1/(2R), half width N/(4R)."""
        return UniformGrid(self.dim, self.n, self.n / (4.0 * self.half_width))

    def matches(self, other: "UniformGrid") -> bool:
        return (
            self.dim == other.dim
            and self.n == other.n
            and np.isclose(self.half_width, other.half_width, rtol=1e-12, atol=0.0)
        )

    def steps(self, offset: Sequence[float]) -> np.ndarray:
        """Integer node offsets for a translation; rejects off-grid values."""
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        if offset.shape != (self.dim,):
            raise GridError(f"expected a vector of length {self.dim}, got shape {offset.shape}")
        ratio = offset / self.spacing
        rounded = np.rint(ratio)
        if np.any(np.abs(ratio - rounded) > ON_GRID_TOL * np.maximum(1.0, np.abs(ratio))):
            raise GridError(f"translation {offset.tolist()} is not a multiple of h={self.spacing}")
        return rounded.astype(int)

    def nearest_index(self, value: Sequence[float]) -> Tuple[np.ndarray, float]:
        """Nearest node index and the snap distance to it."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        index = np.rint((value + self.half_width) / self.spacing).astype(int)
        index = np.clip(index, 0, self.n - 1)
        snapped = -self.half_width + index * self.spacing
        return index, float(np.max(np.abs(snapped - value)))


def block_coordinates(blocks: Sequence[UniformGrid]) -> List[np.ndarray]:
    """Per-block coordinate arrays that broadcast against each other.

    Block i gets shape (1,..,1, N_i,..,N_i, 1,..,1, d_i): its own axes in place,
    singleton axes for every other block, and the coordinate vector last.
    """
    total = sum(b.dim for b in blocks)
    coords = []
    offset = 0
    for block in blocks:
        pts = block.points()
        shape = [1] * total
        shape[offset : offset + block.dim] = block.shape
        coords.append(pts.reshape(tuple(shape) + (block.dim,)))
        offset += block.dim
    return coords


# -----------------------------
# Sampled fields
# -----------------------------


@dataclass(frozen=True, eq=False)
class SampledField:
    """Complex samples on a product of uniform grids; the data is read-only."""

    blocks: Tuple[UniformGrid, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        blocks = tuple(self.blocks)
        if not blocks:
            raise GridError("a sampled field needs at least one grid block")
        data = np.array(self.data, dtype=np.complex128)
        expected = tuple(n for b in blocks for n in b.shape)
        if data.shape != expected:
            raise GridError(f"data shape {data.shape} does not match grid blocks {expected}")
        if not np.all(np.isfinite(data)):
            raise GridError("sampled field contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "data", data)

    @property
    def grid(self) -> UniformGrid:
        """The grid of a single-block field."""
        if len(self.blocks) != 1:
            raise GridError(f"expected a single-block field, got {len(self.blocks)} blocks")
        return self.blocks[0]

    @property
    def cell(self) -> float:
        return float(np.prod([b.cell for b in self.blocks]))

    def block_axes(self, index: int) -> Tuple[int, ...]:
        if not 0 <= index < len(self.blocks):
            raise GridError(f"block {index} out of range for {len(self.blocks)} blocks")
        start = sum(b.dim for b in self.blocks[:index])
        return tuple(range(start, start + self.blocks[index].dim))

    def with_data(self, data: np.ndarray) -> "SampledField":
        return SampledField(self.blocks, data)

    def scaled(self, factor: complex) -> "SampledField":
        return SampledField(self.blocks, self.data * factor)


@dataclass(frozen=True)
class TimeFrequencyShift:
    translation: Tuple[float, ...]
    modulation: Tuple[float, ...]

    def __post_init__(self) -> None:
        x = tuple(float(v) for v in np.atleast_1d(self.translation))
        xi = tuple(float(v) for v in np.atleast_1d(self.modulation))
        if len(x) != len(xi):
            raise GridError(f"translation has dimension {len(x)} but modulation has {len(xi)}")
        object.__setattr__(self, "translation", x)
        object.__setattr__(self, "modulation", xi)


def zeros(grid: UniformGrid) -> SampledField:
    return SampledField((grid,), np.zeros(grid.shape, dtype=complex))


def from_function(grid: UniformGrid, func) -> SampledField:
    """Sample func, which receives coordinates with the last axis of length d."""
    return SampledField((grid,), func(grid.points()))


# -----------------------------
# Fourier transform
# -----------------------------


def _transform_axis(data: np.ndarray, axis: int, source: UniformGrid, target: UniformGrid, sign: int) -> np.ndarray:
    n = source.n
    shape = [1] * data.ndim
    shape[axis] = n
    index = np.arange(n)
    pre = np.exp(sign * 2j * np.pi * index * source.spacing * target.axis()[0]).reshape(shape)
    post = (source.spacing * np.exp(sign * 2j * np.pi * source.axis()[0] * target.axis())).reshape(shape)
    if sign < 0:
        out = sp_fft.fft(data * pre, axis=axis)
    else:
        out = sp_fft.ifft(data * pre, axis=axis, norm="forward")
    return out * post


def dft(field_in: SampledField, axes: Optional[Iterable[int]] = None, sign: int = -1) -> SampledField:
    """Riemann-sum Fourier transform of the selected blocks.

    Each selected block moves from its grid to the dual grid; the kernel is
    exp(sign * 2 pi i x . xi) and the quadrature weight is h^d.
    """
    if sign not in (-1, 1):
        raise GridError(f"sign must be -1 or +1, got {sign}")
    selected = range(len(field_in.blocks)) if axes is None else sorted(set(axes))
    blocks = list(field_in.blocks)
    data = np.array(field_in.data)
    for b in selected:
        if not 0 <= b < len(blocks):
            raise GridError(f"axis (block) {b} out of range for {len(blocks)} blocks")
        source = blocks[b]
        target = source.dual()
        for axis in field_in.block_axes(b):
            data = _transform_axis(data, axis, source, target, sign)
        blocks[b] = target
    return SampledField(tuple(blocks), data)


def idft(field_in: SampledField, axes: Optional[Iterable[int]] = None) -> SampledField:
    return dft(field_in, axes, sign=1)


# -----------------------------
# Time-frequency shifts
# -----------------------------


def translate_data(data: np.ndarray, steps: Sequence[int], periodic: bool = False) -> np.ndarray:
    """out[j] = data[j - steps] on the leading len(steps) axes."""
    out = np.roll(data, tuple(int(s) for s in steps), axis=tuple(range(len(steps))))
    if periodic:
        return out
    for axis, s in enumerate(steps):
        if s == 0:
            continue
        index = [slice(None)] * out.ndim
        index[axis] = slice(0, s) if s > 0 else slice(s, None)
        out[tuple(index)] = 0.0
    return out


def apply_shift(field_in: SampledField, shift: TimeFrequencyShift, periodic: bool = False) -> SampledField:
    """M_xi T_x f on the same grid, zero-filled (or rotated when periodic)."""
    grid = field_in.grid
    if len(shift.translation) != grid.dim:
        raise GridError(f"shift has dimension {len(shift.translation)}, grid has {grid.dim}")
    steps = grid.steps(shift.translation)
    data = translate_data(np.array(field_in.data), steps, periodic=periodic)
    xi = np.asarray(shift.modulation)
    if np.any(xi != 0.0):
        data = data * np.exp(2j * np.pi * (grid.points() @ xi))
    return SampledField(field_in.blocks, data)


# -----------------------------
# Norms and test signals
# -----------------------------


def inner(f: SampledField, g: SampledField) -> complex:
    """<f, g> = sum f conj(g) times the cell volume."""
    if len(f.blocks) != len(g.blocks) or not all(a.matches(b) for a, b in zip(f.blocks, g.blocks)):
        raise GridError("inner product of fields on different grids")
    return complex(np.vdot(g.data, f.data) * f.cell)


def lp_norm(field_in: SampledField, p: float = 2.0) -> float:
    values = np.abs(field_in.data)
    if np.isinf(p):
        return float(values.max(initial=0.0))
    return float((np.sum(values ** p) * field_in.cell) ** (1.0 / p))


def l2_norm(field_in: SampledField) -> float:
    return lp_norm(field_in, 2.0)


def gaussian(
    grid: UniformGrid,
    center: Union[float, Sequence[float]] = 0.0,
    frequency: Union[float, Sequence[float]] = 0.0,
    width: float = 1.0,
) -> SampledField:
    """L2-normalized Gaussian packet 2^(d/4) w^(-d/2) exp(-pi|t-c|^2/w^2) exp(2 pi i xi.t)."""
    pts = grid.points()
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    xi = np.broadcast_to(np.asarray(frequency, dtype=float), (grid.dim,))
    r2 = np.sum((pts - c) ** 2, axis=-1)
    values = 2.0 ** (grid.dim / 4.0) * width ** (-grid.dim / 2.0) * np.exp(-np.pi * r2 / width ** 2)
    return SampledField((grid,), values * np.exp(2j * np.pi * (pts @ xi)))


def random_wave_packets(grid: UniformGrid, rng: np.random.Generator, count: int = 4) -> SampledField:
    """Sum of Gaussian packets centred in the central half of space and frequency."""
    data = np.zeros(grid.shape, dtype=complex)
    space = grid.half_width / 4.0
    freq = grid.dual().half_width / 4.0
    for _ in range(count):
        center = rng.uniform(-space, space, grid.dim)
        frequency = rng.uniform(-freq, freq, grid.dim)
        amplitude = rng.normal() + 1j * rng.normal()
        data += amplitude * gaussian(grid, center, frequency).data
    return SampledField((grid,), data)


# -----------------------------
# Serialization
# -----------------------------


def encode_field(field_in: SampledField) -> bytes:
    dims = ",".join(str(b.dim) for b in field_in.blocks)
    ns = ",".join(str(b.n) for b in field_in.blocks)
    rs = ",".join(repr(b.half_width) for b in field_in.blocks)
    header = f"dims={dims} blocks={len(field_in.blocks)} N={ns} R={rs}\n"
    return header.encode("ascii") + np.ascontiguousarray(field_in.data, dtype="<c16").tobytes()


def decode_field(payload: bytes) -> SampledField:
    newline = payload.find(b"\n")
    if newline < 0:
        raise GridError("field payload has no header line")
    try:
        parts = dict(item.split("=", 1) for item in payload[:newline].decode("ascii").split())
        dims = [int(v) for v in parts["dims"].split(",")]
        ns = [int(v) for v in parts["N"].split(",")]
        rs = [float(v) for v in parts["R"].split(",")]
        count = int(parts["blocks"])
    except (KeyError, ValueError) as exc:
        raise GridError(f"malformed field header: {exc}") from exc
    if not len(dims) == len(ns) == len(rs) == count:
        raise GridError("field header block counts disagree")
    blocks = tuple(UniformGrid(d, n, r) for d, n, r in zip(dims, ns, rs))
    shape = tuple(n for b in blocks for n in b.shape)
    data = np.frombuffer(payload[newline + 1 :], dtype="<c16")
    if data.size != int(np.prod(shape)):
        raise GridError(f"field payload holds {data.size} values, header implies {int(np.prod(shape))}")
    return SampledField(blocks, data.reshape(shape))


def write_field(path: Path, field_in: SampledField) -> None:
    atomic_write(Path(path), encode_field(field_in))


def read_field(path: Path) -> SampledField:
    return decode_field(Path(path).read_bytes())
