"""Amplitudes, phase functions, their symbol classes and numerical class certification."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from grid_core import SampledField, UniformGrid, block_coordinates
from utils import bracket, seeded_rng

logger = logging.getLogger(__name__)

FD_RELATIVE_STEP = 1e-4
DEGENERATE_DELTA = 1e-8

HORMANDER_READINGS = (
    "exponent read as m_k - rho|beta_k| + delta|alpha|",
    "product read as k = 1..r",
)


class SymbolError(ValueError):
    """Raised for arity mismatches, bad class declarations and inconsistent phases."""


# -----------------------------
# Symbol classes
# -----------------------------


@dataclass(frozen=True)
class SymbolClass:
    """kind is one of hormander, sg, rough, torus.

    hormander/torus: orders = (m_1..m_r) with rho, delta.
    sg/rough: orders = (m1, m2, m3) for (xi, eta, x); rough also carries (N1, N2, N3).
    """

    kind: str
    orders: Tuple[float, ...]
    rho: float = 1.0
    delta: float = 0.0
    smoothness: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("hormander", "sg", "rough", "torus"):
            raise SymbolError(f"unknown symbol class {self.kind!r}")
        if not all(np.isfinite(self.orders)):
            raise SymbolError(f"class orders must be finite, got {self.orders}")
        if self.kind in ("sg", "rough") and len(self.orders) != 3:
            raise SymbolError(f"{self.kind} classes take three orders (m1, m2, m3), got {self.orders}")
        if self.kind == "rough" and len(self.smoothness) != 3:
            raise SymbolError("rough classes need smoothness (N1, N2, N3)")

    def bound(self, coords: Sequence[np.ndarray], orders: Sequence[int]) -> np.ndarray:
        """Right-hand side of the class estimate for derivative orders per block (x first)."""
        x, xis = coords[0], coords[1:]
        if self.kind in ("hormander", "torus"):
            if len(xis) != len(self.orders):
                raise SymbolError(f"class has {len(self.orders)} orders, symbol has {len(xis)} frequency slots")
            out = np.ones(np.broadcast_shapes(*(c.shape[:-1] for c in coords)))
            for xi, m, beta in zip(xis, self.orders, orders[1:]):
                out = out * bracket(xi) ** (m - self.rho * beta + self.delta * orders[0])
            return out
        if len(xis) != 2:
            raise SymbolError(f"{self.kind} classes are bilinear")
        m1, m2, m3 = self.orders
        a, b, c = orders
        if self.kind == "sg":
            return bracket(x) ** (m3 - a) * bracket(xis[0]) ** (m1 - b) * bracket(xis[1]) ** (m2 - c)
        return bracket(x) ** m3 * bracket(xis[0]) ** m1 * bracket(xis[1]) ** m2

    def default_order_limit(self, arity: int) -> Tuple[int, ...]:
        if self.kind == "rough":
            n1, n2, n3 = self.smoothness
            return (2 * n3, 2 * n1, 2 * n2)
        return (2,) * (arity + 1)


def hormander(orders: Sequence[float], rho: float = 1.0, delta: float = 0.0) -> SymbolClass:
    return SymbolClass("hormander", tuple(float(m) for m in orders), rho, delta)


def sg_class(m1: float, m2: float, m3: float) -> SymbolClass:
    return SymbolClass("sg", (float(m1), float(m2), float(m3)))


def rough_class(m1: float, m2: float, m3: float, n1: int, n2: int, n3: int) -> SymbolClass:
    return SymbolClass("rough", (float(m1), float(m2), float(m3)), smoothness=(int(n1), int(n2), int(n3)))


def torus_class(orders: Sequence[float], rho: float = 1.0, delta: float = 0.0) -> SymbolClass:
    return SymbolClass("torus", tuple(float(m) for m in orders), rho, delta)


# -----------------------------
# Separable factors
# -----------------------------


class Factor:
    """A function of one d-dimensional block; derivatives are exact in d = 1."""

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, order: int) -> Callable[[np.ndarray], np.ndarray]:
        raise NotImplementedError


class ConstantFactor(Factor):
    def __call__(self, z: np.ndarray) -> np.ndarray:
        return np.ones(np.shape(z)[:-1])

    def derivative(self, order: int) -> Callable[[np.ndarray], np.ndarray]:
        if order == 0:
            return self
        return lambda z: np.zeros(np.shape(z)[:-1])


class BracketPower(Factor):
    """<z>^m; d/dt^k <t>^m = P_k(t) <t>^(m - 2k) with P_{k+1} = P_k'(1+t^2) + (m-2k) t P_k."""

    def __init__(self, m: float) -> None:
        self.m = float(m)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return bracket(z) ** self.m

    def derivative(self, order: int) -> Callable[[np.ndarray], np.ndarray]:
        poly = Polynomial([1.0])
        one_plus = Polynomial([1.0, 0.0, 1.0])
        t = Polynomial([0.0, 1.0])
        for k in range(order):
            poly = poly.deriv() * one_plus + (self.m - 2 * k) * t * poly
        m = self.m

        def evaluate(z: np.ndarray) -> np.ndarray:
            s = z[..., 0]
            return poly(s) * (1.0 + s * s) ** (m / 2.0 - order)

        return evaluate


class GaussianFactor(Factor):
    """exp(-pi a |z|^2); d/dt^k = Q_k(t) exp(-pi a t^2) with Q_{k+1} = Q_k' - 2 pi a t Q_k."""

    def __init__(self, a: float) -> None:
        self.a = float(a)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return np.exp(-np.pi * self.a * np.sum(z * z, axis=-1))

    def derivative(self, order: int) -> Callable[[np.ndarray], np.ndarray]:
        poly = Polynomial([1.0])
        t = Polynomial([0.0, 1.0])
        for _ in range(order):
            poly = poly.deriv() - 2.0 * np.pi * self.a * t * poly
        a = self.a

        def evaluate(z: np.ndarray) -> np.ndarray:
            s = z[..., 0]
            return poly(s) * np.exp(-np.pi * a * s * s)

        return evaluate


# -----------------------------
# Symbols
# -----------------------------


@dataclass(frozen=True, eq=False)
class SymbolSpec:
    """sigma(x, xi_1, .., xi_r); arguments broadcast with the block vector on the last axis."""

    name: str
    arity: int
    evaluator: Callable[..., np.ndarray]
    declared: SymbolClass
    factors: Optional[Tuple[Factor, ...]] = None
    integer_frequencies: bool = False

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise SymbolError(f"symbol arity must be positive, got {self.arity}")
        if self.factors is not None and len(self.factors) != self.arity + 1:
            raise SymbolError(f"separable symbol needs {self.arity + 1} factors, got {len(self.factors)}")

    def __call__(self, x: np.ndarray, *xis: np.ndarray) -> np.ndarray:
        if len(xis) != self.arity:
            raise SymbolError(f"{self.name} takes {self.arity} frequency arguments, got {len(xis)}")
        return self.evaluator(np.asarray(x, dtype=float), *(np.asarray(xi, dtype=float) for xi in xis))

    def declare(self, declared: SymbolClass) -> "SymbolSpec":
        return replace(self, declared=declared)

    def analytic_derivative(self, orders: Sequence[int]) -> Optional[Callable[..., np.ndarray]]:
        """Exact derivative for separable one-dimensional blocks, else None."""
        if self.factors is None:
            return None
        parts = [factor.derivative(int(k)) for factor, k in zip(self.factors, orders)]

        def evaluate(x: np.ndarray, *xis: np.ndarray) -> np.ndarray:
            if any(arg.shape[-1] != 1 for arg in (x,) + xis):
                raise SymbolError("analytic derivatives are one-dimensional")
            out = parts[0](x)
            for part, xi in zip(parts[1:], xis):
                out = out * part(xi)
            return out

        return evaluate


def separable(name: str, factors: Sequence[Factor], declared: SymbolClass, integer_frequencies: bool = False) -> SymbolSpec:
    factors = tuple(factors)

    def evaluate(x: np.ndarray, *xis: np.ndarray) -> np.ndarray:
        out = factors[0](x)
        for factor, xi in zip(factors[1:], xis):
            out = out * factor(xi)
        return out

    return SymbolSpec(name, len(factors) - 1, evaluate, declared, factors, integer_frequencies)


def one(r: int = 1, declared: Optional[SymbolClass] = None, torus: bool = False) -> SymbolSpec:
    if declared is None:
        declared = torus_class((0.0,) * r) if torus else hormander((0.0,) * r)
    return separable("one", [ConstantFactor() for _ in range(r + 1)], declared, integer_frequencies=torus)


def sg(m1: float, m2: float, m3: float) -> SymbolSpec:
    """<x>^m3 <xi>^m1 <eta>^m2 in SG(m1, m2, m3)."""
    factors = [BracketPower(m3), BracketPower(m1), BracketPower(m2)]
    return separable(f"sg({m1:g},{m2:g},{m3:g})", factors, sg_class(m1, m2, m3))


def bracket_symbol(m: float, slot: int = 1, r: int = 1) -> SymbolSpec:
    """<xi_slot>^m; slot 0 is the space variable."""
    factors: List[Factor] = [ConstantFactor() for _ in range(r + 1)]
    factors[slot] = BracketPower(m)
    orders = [0.0] * r
    if slot > 0:
        orders[slot - 1] = float(m)
    return separable(f"bracket({m:g},{slot})", factors, hormander(orders))


def peaked(a: float = 1.0, r: int = 1) -> SymbolSpec:
    """exp(-pi a (|x|^2 + sum |xi_k|^2))."""
    declared = sg_class(0, 0, 0) if r == 2 else hormander((0.0,) * r)
    return separable(f"peaked({a:g})", [GaussianFactor(a) for _ in range(r + 1)], declared)


def torus_bracket(m: float, r: int = 1) -> SymbolSpec:
    """<k_1>^m ... <k_r>^m on T^d x Z^{dr}."""
    factors = [ConstantFactor()] + [BracketPower(m) for _ in range(r)]
    return separable(f"torus_bracket({m:g})", factors, torus_class((float(m),) * r), integer_frequencies=True)


def spike(k0: Sequence[int], r: int = 1) -> SymbolSpec:
    """Indicator of k_1 = .. = k_r = k0."""
    target = np.atleast_1d(np.asarray(k0, dtype=float))

    def evaluate(x: np.ndarray, *ks: np.ndarray) -> np.ndarray:
        out = np.ones(np.broadcast_shapes(x.shape[:-1], *(k.shape[:-1] for k in ks)))
        for k in ks:
            out = out * np.all(k == target, axis=-1)
        return out

    return SymbolSpec(f"spike({','.join(str(int(v)) for v in target)})", r, evaluate, torus_class((0.0,) * r), None, True)


def random_sg(seed: Optional[int] = None, terms: int = 3) -> SymbolSpec:
    """Sum of bracket-power products with random coefficients and orders in [-1, 0]."""
    rng = seeded_rng(seed)
    coefficients = rng.normal(size=terms) + 1j * rng.normal(size=terms)
    orders = rng.uniform(-1.0, 0.0, size=(terms, 3))
    shifts = rng.uniform(-1.0, 1.0, size=(terms, 3))

    def evaluate(x: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        out = 0.0
        for c, (p, q, s), (a, b, e) in zip(coefficients, orders, shifts):
            out = out + c * bracket(x - a) ** s * bracket(xi - b) ** p * bracket(eta - e) ** q
        return out

    return SymbolSpec(f"random_sg(seed={seed})", 2, evaluate, sg_class(0, 0, 0))


@lru_cache(maxsize=32)
def _sample_cached(s: SymbolSpec, grids: Tuple[UniformGrid, ...]) -> SampledField:
    coords = block_coordinates(grids)
    shape = tuple(n for g in grids for n in g.shape)
    values = np.broadcast_to(s(*coords), shape)
    return SampledField(grids, values)


def sample_symbol(s: SymbolSpec, grids: Sequence[UniformGrid]) -> SampledField:
    """sigma on the product of the grids (x first); cached per (symbol, grids)."""
    grids = tuple(grids)
    if len(grids) != s.arity + 1:
        raise SymbolError(f"{s.name} has arity {s.arity} but {len(grids)} grids were given")
    try:
        return _sample_cached(s, grids)
    except (FloatingPointError, ValueError) as exc:
        if isinstance(exc, SymbolError):
            raise
        raise SymbolError(f"evaluating {s.name} failed: {exc}") from exc


def forward_difference(s: SymbolSpec, beta: Sequence[Sequence[int]]) -> SymbolSpec:
    """Iterated forward differences in the integer frequency slots.

    beta[i] is the multi-index applied to slot i (length d each).
    """
    if not s.integer_frequencies:
        raise SymbolError(f"{s.name} is not defined on integer frequencies")
    beta = [tuple(int(b) for b in np.atleast_1d(row)) for row in beta]
    if len(beta) != s.arity:
        raise SymbolError(f"need one multi-index per frequency slot ({s.arity}), got {len(beta)}")
    # terms of prod (shift - 1)^b: (coefficient, offsets per slot)
    axis_terms = []
    for slot, row in enumerate(beta):
        for component, b in enumerate(row):
            axis_terms.append([((-1) ** (b - j) * comb(b, j), slot, component, j) for j in range(b + 1)])
    terms = []
    for combo in itertools.product(*axis_terms):
        coefficient = 1
        offsets = [np.zeros(len(row)) for row in beta]
        for c, slot, component, j in combo:
            coefficient *= c
            offsets[slot][component] += j
        terms.append((coefficient, offsets))
    base = s

    def evaluate(x: np.ndarray, *ks: np.ndarray) -> np.ndarray:
        out = 0.0
        for coefficient, offsets in terms:
            out = out + coefficient * base(x, *(k + o for k, o in zip(ks, offsets)))
        return out

    label = ";".join(",".join(str(b) for b in row) for row in beta)
    return SymbolSpec(f"diff[{label}]({s.name})", s.arity, evaluate, s.declared, None, True)


# -----------------------------
# Class certification
# -----------------------------


@dataclass
class ClassRow:
    orders: Tuple[int, ...]
    ratio: float
    doubled_ratio: float
    method: str
    note: str = ""


@dataclass
class ClassReport:
    symbol: str
    declared: SymbolClass
    rows: List[ClassRow]
    passed: bool
    box: float
    notes: Tuple[str, ...] = ()

    @property
    def max_ratio(self) -> float:
        return max((row.ratio for row in self.rows), default=0.0)


def _box_coordinates(arity: int, d: int, box: float, points_per_axis: int, integer: bool) -> List[np.ndarray]:
    real_axis = np.linspace(-box, box, points_per_axis)
    int_axis = np.arange(-int(box), int(box) + 1, dtype=float)
    axes = [real_axis] + [int_axis if integer else real_axis] * arity
    count = d * (arity + 1)
    coords = []
    for block, axis in enumerate(axes):
        for component in range(d):
            shape = [1] * count
            shape[block * d + component] = axis.size
            coords.append(axis.reshape(shape))
    blocks = []
    for block in range(arity + 1):
        parts = coords[block * d : (block + 1) * d]
        shape = np.broadcast_shapes(*(p.shape for p in parts))
        blocks.append(np.stack([np.broadcast_to(p, shape) for p in parts], axis=-1))
    return blocks


def _central_difference(func: Callable[..., np.ndarray], coords: List[np.ndarray], block: int, order: int, step: float) -> np.ndarray:
    if order == 0:
        return func(*coords)
    e = np.zeros(coords[block].shape[-1])
    e[0] = step
    plus = list(coords)
    minus = list(coords)
    plus[block] = coords[block] + e
    minus[block] = coords[block] - e
    return (
        _central_difference(func, plus, block, order - 1, step)
        - _central_difference(func, minus, block, order - 1, step)
    ) / (2.0 * step)


def _fd_derivative(func: Callable[..., np.ndarray], coords: List[np.ndarray], orders: Sequence[int], step: float) -> np.ndarray:
    def nested(block: int, h: float) -> Callable[..., np.ndarray]:
        if block == len(orders):
            return func
        inner = nested(block + 1, h)
        return lambda *c: _central_difference(inner, list(c), block, orders[block], h)

    coarse = nested(0, step)(*coords)
    fine = nested(0, step / 2.0)(*coords)
    # one Richardson step for the h^2 error term
    return (4.0 * fine - coarse) / 3.0


def _derivative_values(s: SymbolSpec, coords: List[np.ndarray], orders: Tuple[int, ...]) -> Tuple[np.ndarray, str]:
    if s.integer_frequencies:
        differenced = forward_difference(s, [(b,) + (0,) * (coords[k + 1].shape[-1] - 1) for k, b in enumerate(orders[1:])])
        if orders[0] == 0:
            return differenced(*coords), "exact"
        return _fd_derivative(differenced, coords, (orders[0],) + (0,) * s.arity, _fd_step(orders[0])), "fd"
    analytic = s.analytic_derivative(orders)
    if analytic is not None and all(c.shape[-1] == 1 for c in coords):
        return analytic(*coords), "analytic"
    return _fd_derivative(s, coords, orders, _fd_step(sum(orders))), "fd"


def _fd_step(total_order: int) -> float:
    return FD_RELATIVE_STEP * 10.0 ** (max(0, total_order - 2) / 2.0)


def _multi_indices(limit: Sequence[int]) -> List[Tuple[int, ...]]:
    return list(itertools.product(*(range(k + 1) for k in limit)))


def certify_class(
    s: SymbolSpec,
    order_limit: Optional[Sequence[int]] = None,
    box: float = 8.0,
    tol: float = 1e-6,
    points_per_axis: int = 9,
    growth: float = 1.25,
    d: int = 1,
) -> ClassReport:
    """Max of |derivative| / class bound over the box, and again over the doubled box.

    Derivative orders are counted along the first component of each block. The
    check passes when every ratio is finite and does not keep growing with the box.
    """
    limit = tuple(order_limit or s.declared.default_order_limit(s.arity))
    if len(limit) != s.arity + 1:
        raise SymbolError(f"order limit needs {s.arity + 1} entries, got {limit}")
    small = _box_coordinates(s.arity, d, box, points_per_axis, s.integer_frequencies)
    large = _box_coordinates(s.arity, d, 2.0 * box, points_per_axis, s.integer_frequencies)
    rows: List[ClassRow] = []
    passed = True
    for orders in _multi_indices(limit):
        note = ""
        with np.errstate(all="ignore"):
            values, method = _derivative_values(s, small, orders)
            values_big, _ = _derivative_values(s, large, orders)
            ratio = float(np.max(np.abs(values) / s.declared.bound(small, orders)))
            doubled = float(np.max(np.abs(values_big) / s.declared.bound(large, orders)))
        if not (np.isfinite(ratio) and np.isfinite(doubled)):
            note = "unstable: non-finite derivative estimate"
            ok = False
        else:
            ok = doubled <= growth * ratio + tol
            if not ok:
                note = f"ratio grows from {ratio:.4g} to {doubled:.4g} when the box doubles"
        passed = passed and ok
        rows.append(ClassRow(orders, ratio, doubled, method, note))
    notes = HORMANDER_READINGS if s.declared.kind in ("hormander", "torus") else ()
    if not passed:
        logger.info("%s fails its declared %s class", s.name, s.declared.kind)
    return ClassReport(s.name, s.declared, rows, passed, box, notes)


# -----------------------------
# Phases
# -----------------------------


@dataclass(frozen=True, eq=False)
class PhaseSpec:
    """Phi(x, xi) with analytic gradient (d_x Phi, d_xi Phi)."""

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]
    linear_in_second: bool = True
    second_order_bound: Optional[float] = None
    nondegeneracy: Optional[float] = None
    standard: bool = False

    def __call__(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))


def linear() -> PhaseSpec:
    """Phi(x, xi) = x . xi."""
    return PhaseSpec(
        "phase.linear",
        lambda x, xi: np.sum(x * xi, axis=-1),
        lambda x, xi: (np.broadcast_to(xi, np.broadcast_shapes(x.shape, xi.shape)), np.broadcast_to(x, np.broadcast_shapes(x.shape, xi.shape))),
        True,
        1.0,
        1.0,
        standard=True,
    )


def shifted(c) -> PhaseSpec:
    """Phi(x, xi) = (x + c) . xi."""
    shift = np.atleast_1d(np.asarray(c, dtype=float))

    def gradient(x, xi):
        shape = np.broadcast_shapes(x.shape, xi.shape)
        return np.broadcast_to(xi, shape), np.broadcast_to(x + shift, shape)

    label = ",".join(f"{v:g}" for v in shift)
    return PhaseSpec(f"phase.shifted({label})", lambda x, xi: np.sum((x + shift) * xi, axis=-1), gradient, True, 1.0, 1.0)


def perturbed(eps: float) -> PhaseSpec:
    """Phi(x, xi) = (x + eps sin x) . xi, sin taken componentwise."""
    eps = float(eps)

    def gradient(x, xi):
        shape = np.broadcast_shapes(x.shape, xi.shape)
        return np.broadcast_to(xi * (1.0 + eps * np.cos(x)), shape), np.broadcast_to(x + eps * np.sin(x), shape)

    return PhaseSpec(
        f"phase.perturbed({eps:g})",
        lambda x, xi: np.sum((x + eps * np.sin(x)) * xi, axis=-1),
        gradient,
        True,
        None,
        1.0 - abs(eps),
    )


def zero_phase() -> PhaseSpec:
    def gradient(x, xi):
        shape = np.broadcast_shapes(x.shape, xi.shape)
        return np.zeros(shape), np.zeros(shape)

    return PhaseSpec("phase.zero", lambda x, xi: np.zeros(np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])), gradient, True, 0.0, 0.0)


def joint_phase(phases: Sequence[PhaseSpec], x: np.ndarray, xis: Sequence[np.ndarray]) -> np.ndarray:
    """Phi(x, xi_1..xi_r) = sum Phi_i(x, xi_i)."""
    total = 0.0
    for phase, xi in zip(phases, xis):
        total = total + phase(x, xi)
    return np.asarray(total)


def joint_gradient(phases: Sequence[PhaseSpec], x: np.ndarray, xis: Sequence[np.ndarray]) -> np.ndarray:
    """(d_x Phi, d_xi1 Phi, .., d_xir Phi) stacked on the last axis."""
    x = np.asarray(x, dtype=float)
    dx = 0.0
    parts = []
    for phase, xi in zip(phases, xis):
        gx, gxi = phase.gradient(x, np.asarray(xi, dtype=float))
        dx = dx + gx
        parts.append(gxi)
    shape = np.broadcast_shapes(np.shape(dx), *(p.shape for p in parts))
    return np.concatenate([np.broadcast_to(dx, shape)] + [np.broadcast_to(p, shape) for p in parts], axis=-1)


@dataclass
class PhaseReport:
    gradient_error: float
    linearity_error: float
    second_order_max: float
    third_order_max: float
    delta_estimate: float
    degenerate: bool
    bound_violations: int
    samples: int
    notes: Tuple[str, ...] = field(default_factory=tuple)


def _split(z: np.ndarray, d: int, r: int) -> Tuple[np.ndarray, List[np.ndarray]]:
    return z[..., :d], [z[..., d * (k + 1) : d * (k + 2)] for k in range(r)]


def _hessian(phases: Sequence[PhaseSpec], z: np.ndarray, d: int, step: float) -> np.ndarray:
    """H[..., i, j] = d_j (grad Phi)_i by central differences of the analytic gradient."""
    r = len(phases)
    n = z.shape[-1]
    columns = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        x_p, xi_p = _split(z + e, d, r)
        x_m, xi_m = _split(z - e, d, r)
        columns.append((joint_gradient(phases, x_p, xi_p) - joint_gradient(phases, x_m, xi_m)) / (2.0 * step))
    return np.stack(columns, axis=-1)


def phase_checks(
    phases, box: float = 4.0, samples: int = 100, seed: Optional[int] = None, d: int = 1, tol: float = 1e-6
) -> PhaseReport:
    """Gradient consistency, derivative bounds and mixed-Hessian nondegeneracy of sum Phi_i(x, xi_i)."""
    if isinstance(phases, PhaseSpec):
        phases = [phases]
    phases = list(phases)
    r = len(phases)
    rng = seeded_rng(seed)
    z = rng.uniform(-box, box, size=(samples, d * (r + 1)))
    x, xis = _split(z, d, r)
    step = max(1.0, box) * FD_RELATIVE_STEP

    # analytic gradient against Richardson-refined central differences of Phi
    analytic = joint_gradient(phases, x, xis)
    numeric = np.empty_like(analytic)
    for j in range(z.shape[-1]):
        estimates = []
        for h in (step, step / 2.0):
            e = np.zeros(z.shape[-1])
            e[j] = h
            xp, xip = _split(z + e, d, r)
            xm, xim = _split(z - e, d, r)
            estimates.append((joint_phase(phases, xp, xip) - joint_phase(phases, xm, xim)) / (2.0 * h))
        numeric[:, j] = (4.0 * estimates[1] - estimates[0]) / 3.0
    gradient_error = float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
    if gradient_error > tol:
        names = ", ".join(p.name for p in phases)
        raise SymbolError(f"analytic gradient of {names} disagrees with finite differences ({gradient_error:.2e})")

    linearity_error = 0.0
    for phase, xi in zip(phases, xis):
        if not phase.linear_in_second:
            continue
        eta = rng.uniform(-box, box, size=xi.shape)
        a, b = rng.normal(size=(2, samples, 1))
        origin = phase(x, np.zeros_like(xi))
        lhs = phase(x, a * xi + b * eta) - origin
        rhs = a[:, 0] * (phase(x, xi) - origin) + b[:, 0] * (phase(x, eta) - origin)
        scale = np.maximum(1.0, np.abs(lhs))
        linearity_error = max(linearity_error, float(np.max(np.abs(lhs - rhs) / scale)))

    hessian = _hessian(phases, z, d, step)
    second = float(np.max(np.abs(hessian)))
    h_plus = [_hessian(phases, z + e, d, step) for e in step * np.eye(z.shape[-1])]
    h_minus = [_hessian(phases, z - e, d, step) for e in step * np.eye(z.shape[-1])]
    third = max(float(np.max(np.abs(p - m))) / (2.0 * step) for p, m in zip(h_plus, h_minus))

    determinants = []
    for k in range(r):
        rows = slice(d * (k + 1), d * (k + 2))
        block = hessian[:, rows, :d]
        determinants.append(np.abs(np.linalg.det(block)))
    delta = float(np.min(determinants)) if determinants else 0.0

    violations = 0
    for phase in phases:
        if phase.second_order_bound is not None and second > phase.second_order_bound * (1 + 1e-6) + 1e-6:
            violations += 1
    degenerate = delta < DEGENERATE_DELTA
    if degenerate:
        logger.warning("phase %s is degenerate: min |det mixed Hessian| = %.3g", "+".join(p.name for p in phases), delta)
    notes = ("nondegeneracy measured as min |det d_x d_xi_i Phi_i| over the slots",)
    return PhaseReport(gradient_error, linearity_error, second, third, delta, degenerate, violations, samples, notes)


def check_boundedness_hypotheses(
    s1: float, s2: float, m1: float, m2: float, d: int, n1: float, n2: float, n3: float
) -> Tuple[bool, List[str]]:
    """N1 > (s2+d)/2, N2 > d/2 and (|m2|+d)/2 < N3 < (-s1-|m1|-d)/2."""
    problems = []
    if not n1 > (s2 + d) / 2:
        problems.append(f"N1={n1} must exceed (s2+d)/2={(s2 + d) / 2:g}")
    if not n2 > d / 2:
        problems.append(f"N2={n2} must exceed d/2={d / 2:g}")
    low, high = (abs(m2) + d) / 2, (-s1 - abs(m1) - d) / 2
    if not low < n3 < high:
        problems.append(f"N3={n3} must lie in ({low:g}, {high:g})")
    return not problems, problems


SYMBOL_LIBRARY: Dict[str, Callable[..., SymbolSpec]] = {
    "one": one,
    "sg": sg,
    "bracket": bracket_symbol,
    "peaked": peaked,
    "gaussian": peaked,
    "torus_bracket": torus_bracket,
    "spike": spike,
    "random_sg": random_sg,
}

PHASE_LIBRARY: Dict[str, Callable[..., PhaseSpec]] = {
    "phase.linear": linear,
    "phase.shifted": shifted,
    "phase.perturbed": perturbed,
    "phase.zero": zero_phase,
}
