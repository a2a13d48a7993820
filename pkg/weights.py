"""Polynomial weights on phase space and the s-moderateness check."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from utils import bracket, seeded_rng

logger = logging.getLogger(__name__)


class WeightError(ValueError):
    """Raised for dimension mismatches and malformed weight specs."""


# -----------------------------
# Weight kinds
# -----------------------------


class Weight:
    """A strictly positive function on R^dim, evaluated along the last axis."""

    dim: int = 1

    def __call__(self, z: Union[Sequence[float], np.ndarray]) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self.dim,):
            raise WeightError(f"{self.label} expects vectors of length {self.dim}, got shape {z.shape}")
        return self._evaluate(z)

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def label(self) -> str:
        return type(self).__name__


class ConstantWeight(Weight):
    def __init__(self, dim: int) -> None:
        self.dim = dim

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        return np.ones(z.shape[:-1])

    @property
    def label(self) -> str:
        return "one"


class PolynomialWeight(Weight):
    """omega_s(z) = (1 + |z|^2)^(s/2)."""

    def __init__(self, s: float, dim: int) -> None:
        self.s = float(s)
        self.dim = dim

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        return bracket(z) ** self.s

    @property
    def label(self) -> str:
        return f"omega(s={self.s:g})"


class TensorWeight(Weight):
    """Product of weights acting on consecutive chunks of the argument."""

    def __init__(self, parts: Sequence[Weight]) -> None:
        if not parts:
            raise WeightError("tensor weight needs at least one factor")
        self.parts = list(parts)
        self.dim = sum(p.dim for p in self.parts)

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        out = np.ones(z.shape[:-1])
        start = 0
        for part in self.parts:
            out = out * part._evaluate(z[..., start : start + part.dim])
            start += part.dim
        return out

    @property
    def label(self) -> str:
        return "tensor(" + ",".join(p.label for p in self.parts) + ")"


class ProductWeight(Weight):
    """Pointwise product of weights on the same space."""

    def __init__(self, parts: Sequence[Weight]) -> None:
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise WeightError(f"product weight factors disagree on dimension: {sorted(dims)}")
        self.parts = list(parts)
        self.dim = dims.pop()

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        out = np.ones(z.shape[:-1])
        for part in self.parts:
            out = out * part._evaluate(z)
        return out

    @property
    def label(self) -> str:
        return "product(" + ",".join(p.label for p in self.parts) + ")"


class PullbackWeight(Weight):
    """w(M z) for an invertible linear map M."""

    def __init__(self, base: Weight, matrix: np.ndarray, name: str = "M") -> None:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (base.dim, base.dim):
            raise WeightError(f"pullback matrix shape {matrix.shape} does not fit a weight on R^{base.dim}")
        if abs(np.linalg.det(matrix)) < 1e-12:
            raise WeightError("pullback matrix is singular")
        self.base = base
        self.matrix = matrix
        self.name = name
        self.dim = base.dim

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        return self.base._evaluate(z @ self.matrix.T)

    @property
    def label(self) -> str:
        return f"pullback({self.name},{self.base.label})"


class VWeight(Weight):
    """v_{s1,s2}(x, xi, eta) = <x>^s2 <xi>^s1 <eta>^s2 on R^{3d}."""

    def __init__(self, s1: float, s2: float, d: int = 1) -> None:
        self.s1 = float(s1)
        self.s2 = float(s2)
        self.d = d
        self.dim = 3 * d

    def _evaluate(self, z: np.ndarray) -> np.ndarray:
        d = self.d
        return (
            bracket(z[..., :d]) ** self.s2
            * bracket(z[..., d : 2 * d]) ** self.s1
            * bracket(z[..., 2 * d :]) ** self.s2
        )

    def planar(self) -> TensorWeight:
        """Restriction to phase space R^{2d}: <x>^s2 <xi>^s1."""
        return TensorWeight([PolynomialWeight(self.s2, self.d), PolynomialWeight(self.s1, self.d)])

    @property
    def label(self) -> str:
        return f"v(s1={self.s1:g},s2={self.s2:g})"


def sobolev(s: float, d: int = 1) -> TensorWeight:
    """<xi>^s on phase space R^{2d}."""
    return TensorWeight([ConstantWeight(d), PolynomialWeight(s, d)])


def omega_tensor(s: float, r: int, d: int = 1) -> TensorWeight:
    """Omega_s = omega_s tensored r+1 times, each factor on R^{2d}."""
    return TensorWeight([PolynomialWeight(s, 2 * d) for _ in range(r + 1)])


# -----------------------------
# The transform A and its inverse
# -----------------------------


@dataclass(frozen=True)
class PhaseSpaceTransformA:
    """(u, v) -> ((u1, -v2, .., -v_{r+1}), (v1, u2, .., u_{r+1})); inverse=True gives B."""

    r: int
    d: int = 1
    inverse: bool = False

    @property
    def dim(self) -> int:
        return 2 * self.d * (self.r + 1)

    @property
    def matrix(self) -> np.ndarray:
        d, half = self.d, self.d * (self.r + 1)
        eye = np.eye(d)
        m = np.zeros((self.dim, self.dim))
        # block (row, col) coordinates in units of d
        m[0:d, 0:d] = eye
        m[half : half + d, half : half + d] = eye
        for k in range(1, self.r + 1):
            u_k = slice(k * d, (k + 1) * d)
            v_k = slice(half + k * d, half + (k + 1) * d)
            if self.inverse:
                m[u_k, v_k] = eye
                m[v_k, u_k] = -eye
            else:
                m[u_k, v_k] = -eye
                m[v_k, u_k] = eye
        return m

    def __call__(self, points: Union[Sequence[float], np.ndarray]) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1:] != (self.dim,):
            raise WeightError(f"transform expects vectors of length {self.dim}, got shape {points.shape}")
        return points @ self.matrix.T

    def inverted(self) -> "PhaseSpaceTransformA":
        return PhaseSpaceTransformA(self.r, self.d, not self.inverse)

    @property
    def name(self) -> str:
        return "B" if self.inverse else "A"


def pullback(w: Weight, transform: Union[PhaseSpaceTransformA, np.ndarray]) -> PullbackWeight:
    if isinstance(transform, PhaseSpaceTransformA):
        return PullbackWeight(w, transform.matrix, transform.name)
    return PullbackWeight(w, transform)


def eval_weight(w: Weight, x: Union[Sequence[float], np.ndarray]) -> float:
    value = w(np.asarray(x, dtype=float))
    return float(value)


# -----------------------------
# Moderateness
# -----------------------------


@dataclass
class ModerateReport:
    constant: float
    doubled_constant: float
    passed: bool
    samples: int
    box: float


def moderate_ratio(w: Weight, v: Weight, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """w(x + y) / (v(x) w(y))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return w(x + y) / (v(x) * w(y))


def _pair_samples(dim: int, sample_count: int, box: float, seed: Optional[int]) -> np.ndarray:
    rng = seeded_rng(seed)
    # near-origin pairs are box independent so both box sizes see them
    near = rng.uniform(-1.0, 1.0, size=(sample_count - sample_count // 2, 2 * dim))
    far = rng.uniform(-box, box, size=(sample_count // 2, 2 * dim))
    pairs = np.concatenate([near, far])
    if 2 * dim <= 4:
        ticks = np.linspace(-box, box, 5)
        lattice = np.array(list(itertools.product(ticks, repeat=2 * dim)))
        pairs = np.concatenate([lattice, pairs])
    return pairs


def _sampled_sup(w: Weight, v: Weight, sample_count: int, box: float, seed: Optional[int]) -> float:
    pairs = _pair_samples(w.dim, sample_count, box, seed)
    return float(np.max(moderate_ratio(w, v, pairs[:, : w.dim], pairs[:, w.dim :])))


def check_moderate_by(
    w: Weight,
    v: Weight,
    sample_count: int = 2000,
    box: float = 8.0,
    seed: Optional[int] = None,
    growth_limit: float = 1.5,
) -> ModerateReport:
    """Sampled sup of w(x+y)/(v(x)w(y)) at box and 2*box.

    The check passes when the sup is finite and does not keep growing with the box.
    """
    if sample_count < 1:
        raise WeightError("sample_count must be at least 1")
    if v.dim != w.dim:
        raise WeightError(f"moderating weight lives on R^{v.dim}, weight on R^{w.dim}")
    constant = _sampled_sup(w, v, sample_count, box, seed)
    doubled = _sampled_sup(w, v, sample_count, 2.0 * box, seed)
    passed = bool(np.isfinite(constant) and np.isfinite(doubled) and doubled <= growth_limit * constant)
    if not passed:
        logger.info("%s is not moderate by %s: C=%.4g at box %.3g, %.4g at box %.3g", w.label, v.label, constant, box, doubled, 2 * box)
    return ModerateReport(constant, doubled, passed, sample_count, box)


def check_s_moderate(
    w: Weight, s: float, sample_count: int = 2000, box: float = 8.0, seed: Optional[int] = None
) -> ModerateReport:
    return check_moderate_by(w, PolynomialWeight(s, w.dim), sample_count, box, seed)


def lattice_weight(w: Weight, points: List[np.ndarray]) -> np.ndarray:
    """Evaluate a weight on a broadcastable list of coordinate blocks."""
    shape = np.broadcast_shapes(*(p.shape[:-1] for p in points))
    stacked = np.concatenate([np.broadcast_to(p, shape + p.shape[-1:]) for p in points], axis=-1)
    return w(stacked)
