"""Desk-scale certification: the kernel/symbol STFT relation, boundedness ratios and Gabor-matrix decay."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.linear_model import LinearRegression

from fio_engine import (
    FioProblem,
    KernelField,
    apply_to_atoms,
    bk_apply,
    fio_apply,
    gabor_matrix,
    kernel_from_symbol,
    matrix_apply,
    operator_tensor,
)
from gabor import GaborSystem, analyze, gabor_system, synthesize, with_radius
from grid_core import GridError, SampledField, UniformGrid, block_coordinates, dft, gaussian, inner, lp_norm, translate_data
from lattice import CoefficientTensor
from symbols import SymbolSpec, check_boundedness_hypotheses, joint_gradient, linear, phase_checks
from tf_analysis import NestedNormSpec, mixed_norm, modulation_norm, nested_mixed_norm
from utils import DEFAULT_SEED, bracket, seeded_rng
from weights import PhaseSpaceTransformA, ProductWeight, VWeight, Weight, lattice_weight

logger = logging.getLogger(__name__)

# Magnitudes below this are round-off and stay out of log-log fits.
ROUNDOFF_FLOOR = 1e-14
DECAY_STABILITY = 0.05
BOUND_STABILITY = 0.10
MAX_REDRAWS = 10

INF = float("inf")

# The four nested norms whose finiteness makes a bilinear Gabor matrix bounded on l^{p,q} (x) l^{p,q}.
CONDITION_NORMS: Tuple[Tuple[Tuple[str, ...], Tuple[float, ...]], ...] = (
    (("n", "n0", "n'", "m'", "m", "m0"), (INF, INF, 1.0, INF, 1.0, 1.0)),
    (("n'", "n", "n0", "m", "m0", "m'"), (INF, 1.0, 1.0, INF, INF, 1.0)),
    (("n'", "m'", "n", "m", "n0", "m0"), (INF, INF, 1.0, 1.0, 1.0, 1.0)),
    (("n", "m", "n0", "m0", "n'", "m'"), (INF, INF, INF, INF, 1.0, 1.0)),
)


class VerificationError(ValueError):
    """Raised when a check cannot be carried out: too few samples, degenerate draws, bad exponents."""


def _fmt(value: float) -> str:
    return "inf" if np.isinf(value) else f"{value:g}"


def _holder_target(values: Sequence[float]) -> float:
    total = sum(0.0 if np.isinf(v) else 1.0 / v for v in values)
    return INF if total == 0.0 else 1.0 / total


def _stable(values: Sequence[float], tolerance: float) -> bool:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        return False
    top = float(np.max(values))
    if top == 0.0:
        return True
    return float(np.max(values) - np.min(values)) <= tolerance * top


# -----------------------------
# Kernel / symbol STFT relation
# -----------------------------


@dataclass
class RelationReport:
    max_deviation: float
    snap_distance: float
    points: int
    max_magnitude: float
    resolution_gap: Optional[float] = None


def _translation_steps(blocks: Sequence[UniformGrid], shift: np.ndarray) -> Tuple[List[int], float]:
    steps: List[int] = []
    snap = 0.0
    offset = 0
    for block in blocks:
        ratio = shift[offset : offset + block.dim] / block.spacing
        rounded = np.rint(ratio)
        snap = max(snap, float(np.max(np.abs(ratio - rounded))) * block.spacing)
        steps.extend(int(v) for v in rounded)
        offset += block.dim
    return steps, snap


def _stft_point(F: SampledField, window: np.ndarray, x: np.ndarray, xi: np.ndarray) -> Tuple[complex, float]:
    """V_w F(x, xi) by a Riemann sum; x snaps to the nearest node and w is translated periodically."""
    steps, snap = _translation_steps(F.blocks, x)
    moved = translate_data(np.array(window), steps, periodic=True)
    phase = 0.0
    offset = 0
    for coords, block in zip(block_coordinates(F.blocks), F.blocks):
        phase = phase + coords @ xi[offset : offset + block.dim]
        offset += block.dim
    values = F.data * np.conj(moved) * np.exp(-2j * np.pi * phase)
    return complex(np.sum(values) * F.cell), snap


def symbol_window(G: SampledField) -> SampledField:
    """Inverse Fourier transform of G in every block but the first; the window paired with sigma_0."""
    return dft(G, axes=range(1, len(G.blocks)), sign=1)


def product_gaussian(grid: UniformGrid, copies: int, width: float = 1.0) -> SampledField:
    data = np.ones(())
    packet = gaussian(grid, width=width).data
    for _ in range(copies):
        data = np.multiply.outer(data, packet)
    return SampledField((grid,) * copies, data)


def relation_sample_points(p: FioProblem, count: int, seed: Optional[int] = None, spread: float = 0.25) -> np.ndarray:
    """(u, v) pairs: u on x-grid steps, v_1 free, v_2..v_{r+1} on frequency steps, all in the central part."""
    rng = seeded_rng(seed)
    grid, freq = p.grid, p.freq_grid
    d, r = grid.dim, p.arity
    reach = max(1, int(spread * grid.n / 2))
    u = rng.integers(-reach, reach + 1, size=(count, d * (r + 1))) * grid.spacing
    v_first = rng.uniform(-spread * freq.half_width, spread * freq.half_width, size=(count, d))
    v_rest = rng.integers(-reach, reach + 1, size=(count, d * r)) * freq.spacing
    return np.concatenate([u, v_first, v_rest], axis=1)


def refined_grid(grid: UniformGrid) -> UniformGrid:
    """Same cube with twice the points per axis; its dual keeps the frequency spacing."""
    return UniformGrid(grid.dim, 2 * grid.n, grid.half_width)


def verify_kernel_symbol_stft(
    p: FioProblem,
    G: SampledField,
    sample_points: np.ndarray,
    oracle_window: Optional[SampledField] = None,
) -> RelationReport:
    """max | |V_G K(u, v)| - |V_H sigma_0(A(u, v))| | over the sample points.

    With oracle_window (the window sampled on refined_grid copies) the kernel side is
    recomputed at twice the resolution and the largest change goes to resolution_gap.
    """
    r, d = p.arity, p.grid.dim
    if len(G.blocks) != r + 1 or not all(block.matches(p.grid) for block in G.blocks):
        raise GridError(f"window must live on {r + 1} copies of the operator's x grid")
    size = d * (r + 1)
    points = np.asarray(sample_points, dtype=float).reshape(-1, 2 * size)
    kernel = kernel_from_symbol(p).data
    sigma0 = SampledField(p.grids, operator_tensor(p))
    H = symbol_window(G).data
    transform = PhaseSpaceTransformA(r, d)
    fine_kernel = None
    if oracle_window is not None:
        fine = FioProblem(p.symbol, p.phases, refined_grid(p.grid))
        if len(oracle_window.blocks) != r + 1 or not all(block.matches(fine.grid) for block in oracle_window.blocks):
            raise GridError(f"oracle window must live on {r + 1} copies of the refined grid")
        fine_kernel = kernel_from_symbol(fine).data
    worst, snap, peak, gap = 0.0, 0.0, 0.0, 0.0
    for uv in points:
        lhs, lhs_snap = _stft_point(kernel, G.data, uv[:size], uv[size:])
        mapped = transform(uv)
        rhs, rhs_snap = _stft_point(sigma0, H, mapped[:size], mapped[size:])
        worst = max(worst, abs(abs(lhs) - abs(rhs)))
        peak = max(peak, abs(lhs))
        snap = max(snap, lhs_snap, rhs_snap)
        if fine_kernel is not None:
            fine_lhs, _ = _stft_point(fine_kernel, oracle_window.data, uv[:size], uv[size:])
            gap = max(gap, abs(abs(lhs) - abs(fine_lhs)))
    if snap > 0.0:
        logger.warning("sample points snapped to the grid by up to %.3g", snap)
    return RelationReport(worst, snap, len(points), peak, gap if fine_kernel is not None else None)


# -----------------------------
# Boundedness ratios
# -----------------------------


@dataclass(frozen=True)
class ExponentTuple:
    """Input exponents (p_i, q_i) and target (s1, s2).

    tensor=True marks a tensor-product domain: every slot and the target share (p, q).
    Otherwise the target obeys 1/s1 = sum 1/p_i and 1/s2 = sum 1/q_i.
    """

    inputs: Tuple[Tuple[float, float], ...]
    target: Tuple[float, float]
    tensor: bool = False

    def __post_init__(self) -> None:
        inputs = tuple((float(p), float(q)) for p, q in self.inputs)
        target = (float(self.target[0]), float(self.target[1]))
        for value in [v for pair in inputs + (target,) for v in pair]:
            if not value >= 1.0:
                raise VerificationError(f"exponent {value} outside [1, inf]")
        if self.tensor:
            if any(pair != target for pair in inputs):
                raise VerificationError(f"tensor exponents must all equal the target {target}, got {inputs}")
        else:
            expected = (_holder_target([p for p, _ in inputs]), _holder_target([q for _, q in inputs]))
            if not all(np.isclose(1.0 / e, 1.0 / t, atol=1e-12) for e, t in zip(expected, target)):
                raise VerificationError(f"target {target} violates the Hoelder relation, expected {expected}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "target", target)

    @classmethod
    def holder(cls, *inputs: Tuple[float, float]) -> "ExponentTuple":
        target = (_holder_target([p for p, _ in inputs]), _holder_target([q for _, q in inputs]))
        return cls(tuple(inputs), target)

    @property
    def label(self) -> str:
        slots = "x".join(f"({_fmt(p)},{_fmt(q)})" for p, q in self.inputs)
        return f"{slots}->({_fmt(self.target[0])},{_fmt(self.target[1])})"


@dataclass(frozen=True, eq=False)
class GaborInputFamily:
    """Random Gabor coefficients c_mn ~ <(m, n)>^-decay synthesized with the system's window."""

    sys: GaborSystem
    decay: float = 3.0

    @property
    def label(self) -> str:
        return f"gabor(decay={self.decay:g},alpha={self.sys.alpha:g},beta={self.sys.beta:g})"

    def _reach(self) -> np.ndarray:
        m_ix = self.sys.lattice.m_indices()
        n_ix = self.sys.lattice.n_indices()
        return np.maximum(np.max(np.abs(m_ix), axis=1)[:, None], np.max(np.abs(n_ix), axis=1)[None, :])

    def atom_count(self, radius: Optional[int] = None) -> int:
        reach = self._reach()
        return int(reach.size if radius is None else np.count_nonzero(reach <= radius))

    def draw(self, rng: np.random.Generator, radius: Optional[int] = None) -> SampledField:
        """Coefficients are drawn on the whole lattice and masked, so every radius sees the same draw."""
        m_ix = self.sys.lattice.m_indices()
        n_ix = self.sys.lattice.n_indices()
        shape = (len(m_ix), len(n_ix))
        entries = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        size = np.sqrt(np.sum(m_ix ** 2, axis=1)[:, None] + np.sum(n_ix ** 2, axis=1)[None, :])
        entries = entries * np.sqrt(1.0 + size ** 2) ** (-self.decay)
        if radius is not None:
            entries = np.where(self._reach() <= radius, entries, 0.0)
        c = CoefficientTensor(entries, ("m", "n"), (m_ix, n_ix), (self.sys.alpha, self.sys.beta))
        return synthesize(self.sys, c)


def default_input_family(grid: UniformGrid, decay: float = 3.0) -> GaborInputFamily:
    """Gaussian window with alpha = 4h and beta = 4/(2R)."""
    sys = gabor_system(gaussian(grid), 4.0 * grid.spacing, 4.0 * grid.dual().spacing)
    return GaborInputFamily(sys, decay)


@dataclass
class BoundednessReport:
    exponents: ExponentTuple
    weight: str
    target_weight: str
    radii: Tuple[int, ...]
    max_ratios: Tuple[float, ...]
    trials: int
    family: str
    seed: int
    norm: str = "modulation"
    tolerance: float = BOUND_STABILITY

    @property
    def max_ratio(self) -> float:
        return self.max_ratios[-1]

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.max_ratios)))

    @property
    def stable(self) -> bool:
        return _stable(self.max_ratios, self.tolerance)


def _applier(op: Union[FioProblem, KernelField]) -> Callable[..., SampledField]:
    if isinstance(op, KernelField):
        return lambda *fs: bk_apply(op, *fs)
    return lambda *fs: fio_apply(op, *fs)


def boundedness_ratio(
    op: Union[FioProblem, KernelField],
    inputs: Sequence[SampledField],
    exponents: ExponentTuple,
    window: SampledField,
    weight: Optional[Weight] = None,
    target_weight: Optional[Weight] = None,
) -> float:
    """||T(f_1..f_r)||_{M^{s1,s2}} / prod ||f_i||_{M^{p_i,q_i}} with one analysis window throughout."""
    denominator = 1.0
    for f, (p, q) in zip(inputs, exponents.inputs):
        denominator *= modulation_norm(f, window, p, q, weight)
    if denominator == 0.0:
        raise VerificationError("an input has zero modulation norm")
    s1, s2 = exponents.target
    out = _applier(op)(*inputs)
    return modulation_norm(out, window, s1, s2, target_weight if target_weight is not None else weight) / denominator


def _sampled_maxima(
    ratio: Callable[[List[SampledField]], float],
    arity: int,
    family: GaborInputFamily,
    radii: Sequence[int],
    trials: int,
    seed: int,
) -> Tuple[float, ...]:
    counts = [family.atom_count(radius) for radius in radii]
    for (r0, c0), (r1, c1) in zip(zip(radii, counts), zip(radii[1:], counts[1:])):
        if c1 <= c0:
            raise VerificationError(
                f"radius {r1} selects {c1} atoms and radius {r0} selects {c0}; "
                f"the {family.label} lattice holds {family.atom_count()} atoms, so the radii must grow inside it"
            )
    maxima = []
    for radius in radii:
        rng = seeded_rng(seed)
        best = 0.0
        for _ in range(trials):
            for _attempt in range(MAX_REDRAWS):
                inputs = [family.draw(rng, radius) for _ in range(arity)]
                try:
                    value = ratio(inputs)
                    break
                except VerificationError:
                    logger.warning("degenerate draw at radius %d, redrawing", radius)
            else:
                raise VerificationError(f"{MAX_REDRAWS} consecutive degenerate draws at radius {radius}")
            best = max(best, value)
        maxima.append(best)
        logger.debug("radius %d: max ratio %.6g over %d trials", radius, best, trials)
    return tuple(maxima)


def verify_boundedness(
    op: Union[FioProblem, KernelField],
    exponents: ExponentTuple,
    weight: Optional[Weight] = None,
    trials: int = 100,
    input_family: Optional[GaborInputFamily] = None,
    target_weight: Optional[Weight] = None,
    radii: Sequence[int] = (8, 16),
    seed: Optional[int] = None,
    window: Optional[SampledField] = None,
) -> BoundednessReport:
    """Max sampled ratio per truncation radius of the random inputs."""
    arity = op.arity
    if len(exponents.inputs) != arity:
        raise VerificationError(f"operator takes {arity} inputs, exponents name {len(exponents.inputs)}")
    family = input_family or default_input_family(op.grid)
    window = window if window is not None else gaussian(op.grid)
    seed = DEFAULT_SEED if seed is None else seed
    maxima = _sampled_maxima(
        lambda fs: boundedness_ratio(op, fs, exponents, window, weight, target_weight),
        arity,
        family,
        radii,
        trials,
        seed,
    )
    target = target_weight if target_weight is not None else weight
    report = BoundednessReport(
        exponents,
        weight.label if weight is not None else "one",
        target.label if target is not None else "one",
        tuple(radii),
        maxima,
        trials,
        family.label,
        seed,
    )
    if not report.stable:
        logger.warning("boundedness ratio for %s moves across radii: %s", exponents.label, maxima)
    return report


def verify_lebesgue_bound(
    op: Union[FioProblem, KernelField],
    exponents: Sequence[float],
    trials: int = 100,
    input_family: Optional[GaborInputFamily] = None,
    radii: Sequence[int] = (8, 16),
    seed: Optional[int] = None,
) -> BoundednessReport:
    """||T(f)||_{L^s} / prod ||f_i||_{L^{a_i}} with 1/s = sum 1/a_i and every a_i >= 2."""
    if len(exponents) != op.arity:
        raise VerificationError(f"operator takes {op.arity} inputs, got {len(exponents)} exponents")
    if any(not a >= 2.0 for a in exponents):
        raise VerificationError(f"Lebesgue exponents must be at least 2, got {list(exponents)}")
    exps = ExponentTuple.holder(*((a, a) for a in exponents))
    s = exps.target[0]
    apply = _applier(op)
    family = input_family or default_input_family(op.grid)
    seed = DEFAULT_SEED if seed is None else seed

    def ratio(fs: List[SampledField]) -> float:
        denominator = float(np.prod([lp_norm(f, a) for f, a in zip(fs, exponents)]))
        if denominator == 0.0:
            raise VerificationError("an input has zero Lebesgue norm")
        return lp_norm(apply(*fs), s) / denominator

    maxima = _sampled_maxima(ratio, op.arity, family, radii, trials, seed)
    return BoundednessReport(exps, "one", "one", tuple(radii), maxima, trials, family.label, seed, norm="lebesgue")


def _pdo_orders(sigma: SymbolSpec) -> Tuple[float, float, float]:
    """(m1, m2, m3) of a bilinear symbol's declared class; Hoermander orders carry no x growth."""
    declared = sigma.declared
    if declared.kind in ("sg", "rough"):
        return declared.orders[0], declared.orders[1], declared.orders[2]
    if len(declared.orders) != 2:
        raise VerificationError(f"{sigma.name} is not bilinear")
    return declared.orders[0], declared.orders[1], 0.0


@dataclass
class SweepRow:
    s1: float
    hypotheses_ok: bool
    problems: List[str]
    report: BoundednessReport


def sweep_s1(
    sigma: SymbolSpec,
    family: GaborInputFamily,
    s1_values: Sequence[float],
    s2: float,
    smoothness: Tuple[int, int, int],
    p: float = 2.0,
    q: float = 2.0,
    trials: int = 20,
    radii: Sequence[int] = (8, 16),
    seed: Optional[int] = None,
) -> List[SweepRow]:
    """Bilinear PDO ratios from M^{p,q}_mu (x) M^{p,q}_mu into M^{p,q}_{mu v}, one row per s1.

    mu is the planar restriction of v_{s1,s2}; the target adds v_{-m1-m2-2N3, -m3}.
    """
    m1, m2, m3 = _pdo_orders(sigma)
    n1, n2, n3 = smoothness
    grid = family.sys.grid
    d = grid.dim
    problem = FioProblem(sigma, (linear(), linear()), grid)
    gain = VWeight(-m1 - m2 - 2 * n3, -m3, d).planar()
    exponents = ExponentTuple(((p, q), (p, q)), (p, q), tensor=True)
    rows = []
    for s1 in s1_values:
        ok, problems = check_boundedness_hypotheses(s1, s2, m1, m2, d, n1, n2, n3)
        mu = VWeight(s1, s2, d).planar()
        report = verify_boundedness(problem, exponents, mu, trials, family, ProductWeight([mu, gain]), radii, seed)
        rows.append(SweepRow(float(s1), ok, problems, report))
        logger.info("s1=%g: hypotheses %s, max ratio %.4g, stable=%s", s1, "hold" if ok else "fail", report.max_ratio, report.stable)
    return rows


def verify_analysis_continuity(
    sys: GaborSystem,
    signals: Sequence[SampledField],
    exponents: Tuple[float, float] = (2.0, 2.0),
    weight: Optional[Weight] = None,
    window: Optional[SampledField] = None,
) -> float:
    """Largest ||C_g f||_{l^{p,q}_v} / ||f||_{M^{p,q}_v} over the signals."""
    p, q = exponents
    window = window if window is not None else sys.window
    ratios = []
    for f in signals:
        norm = modulation_norm(f, window, p, q, weight)
        if norm == 0.0:
            continue
        ratios.append(mixed_norm(analyze(sys, f), p, q, weight) / norm)
    if not ratios:
        raise VerificationError("no signal with a nonzero norm")
    return float(max(ratios))


@dataclass
class MatrixBoundReport:
    exponents: ExponentTuple
    max_ratio: float
    violations: int
    draws: int
    l1_norm: float


def _coefficients_like(a: CoefficientTensor, slot: int, rng: np.random.Generator) -> CoefficientTensor:
    axes = (2 + 2 * slot, 3 + 2 * slot)
    shape = tuple(a.entries.shape[k] for k in axes)
    entries = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return CoefficientTensor(entries, ("m", "n"), tuple(a.indices[k] for k in axes), tuple(a.steps[k] for k in axes))


def verify_matrix_bound(
    a: CoefficientTensor, exponents: ExponentTuple, draws: int = 100, seed: Optional[int] = None, tol: float = 1e-10
) -> MatrixBoundReport:
    """||O c||_{l^{s1,s2}} <= ||a||_{l^1} prod ||c_k||_{l^{p_k,q_k}} on random coefficient draws."""
    arity = a.entries.ndim // 2 - 1
    if len(exponents.inputs) != arity:
        raise VerificationError(f"matrix takes {arity} coefficient tensors, exponents name {len(exponents.inputs)}")
    l1 = float(np.sum(np.abs(a.entries)))
    rng = seeded_rng(seed)
    worst, violations = 0.0, 0
    for _ in range(draws):
        cs = [_coefficients_like(a, k, rng) for k in range(arity)]
        lhs = mixed_norm(matrix_apply(a, *cs), *exponents.target)
        rhs = l1 * float(np.prod([mixed_norm(c, p, q) for c, (p, q) in zip(cs, exponents.inputs)]))
        if lhs > rhs * (1.0 + tol) + tol:
            violations += 1
        if rhs > 0.0:
            worst = max(worst, lhs / rhs)
    if violations:
        logger.warning("matrix bound violated on %d of %d draws", violations, draws)
    return MatrixBoundReport(exponents, worst, violations, draws, l1)


def _norm_label(order: Sequence[str], exps: Sequence[float]) -> str:
    return " ".join(f"l^{_fmt(e)}_{name}" for name, e in zip(order, exps))


def _pair_weight(b: CoefficientTensor, axes: Tuple[int, int], w: Optional[Weight]) -> np.ndarray:
    m_pts = b.points(b.index_names[axes[0]])[:, None, :]
    n_pts = b.points(b.index_names[axes[1]])[None, :, :]
    if w is None:
        return np.ones((m_pts.shape[0], n_pts.shape[1]))
    return lattice_weight(w, [m_pts, n_pts])


def weighted_matrix_norms(
    b: CoefficientTensor,
    mu: Optional[Weight] = None,
    target_weight: Optional[Weight] = None,
    orders: Sequence[Tuple[Tuple[str, ...], Tuple[float, ...]]] = CONDITION_NORMS,
) -> Dict[str, float]:
    """Nested norms of b[m',n',m,n,m0,n0] w(m',n') / (mu(m,n) mu(m0,n0)), w = target weight or mu."""
    if b.entries.ndim != 6:
        raise VerificationError(f"nested matrix norms need a bilinear Gabor matrix, got indices {b.index_names}")
    out_w = _pair_weight(b, (0, 1), target_weight if target_weight is not None else mu)
    in_w = _pair_weight(b, (2, 3), mu)
    in0_w = _pair_weight(b, (4, 5), mu)
    entries = b.entries * out_w[:, :, None, None, None, None]
    entries = entries / (in_w[None, None, :, :, None, None] * in0_w[None, None, None, None, :, :])
    weighted = b.with_entries(entries)
    return {_norm_label(order, exps): nested_mixed_norm(weighted, NestedNormSpec(order, exps)) for order, exps in orders}


# -----------------------------
# Almost diagonalization
# -----------------------------


@dataclass
class DecayRow:
    orders: Tuple[int, ...]
    constants: Tuple[float, ...]
    stable: bool


@dataclass
class DecayReport:
    kind: str
    radii: Tuple[int, ...]
    rows: List[DecayRow]
    exponents: Dict[str, float] = field(default_factory=dict)
    growth: Dict[str, float] = field(default_factory=dict)
    consistency: Dict[int, float] = field(default_factory=dict)
    delta: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return all(row.stable for row in self.rows)


def fit_decay_exponent(samples: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """Least-squares (slope, intercept, rms residual) of log magnitude against log distance."""
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    keep = (data[:, 0] > 0.0) & (data[:, 1] >= ROUNDOFF_FLOOR)
    if int(keep.sum()) < 3:
        raise VerificationError(f"need at least 3 usable samples, got {int(keep.sum())}")
    x = np.log(data[keep, 0]).reshape(-1, 1)
    y = np.log(data[keep, 1])
    model = LinearRegression().fit(x, y)
    residual = float(np.sqrt(np.mean((model.predict(x) - y) ** 2)))
    return float(model.coef_[0]), float(model.intercept_), residual


def _axis_points(b: CoefficientTensor, axis: int) -> np.ndarray:
    pts = b.points(b.index_names[axis])
    shape = [1] * b.entries.ndim
    shape[axis] = pts.shape[0]
    return pts.reshape(tuple(shape) + (pts.shape[1],))


def _displacement_sq(b: CoefficientTensor, phases) -> np.ndarray:
    """|grad Phi(m', n_1..n_r) - (n', m_1..m_r)|^2 at lattice points, one value per entry."""
    r = b.entries.ndim // 2 - 1
    d = b.dim
    x = _axis_points(b, 0)
    xis = [_axis_points(b, 3 + 2 * k) for k in range(r)]
    grad = joint_gradient(phases, x, xis)
    targets = [_axis_points(b, 1)] + [_axis_points(b, 2 + 2 * k) for k in range(r)]
    total = 0.0
    for k, target in enumerate(targets):
        total = total + np.sum((grad[..., k * d : (k + 1) * d] - target) ** 2, axis=-1)
    return np.broadcast_to(total, b.entries.shape)


def _pdo_directions(b: CoefficientTensor) -> Dict[str, np.ndarray]:
    """Squared lengths of n+n0-n', m-m' and m0-m' at every entry of a bilinear matrix."""
    m_out, n_out = _axis_points(b, 0), _axis_points(b, 1)
    m, n, m0, n0 = (_axis_points(b, k) for k in range(2, 6))
    shape = b.entries.shape
    return {
        "n+n0-n'": np.broadcast_to(np.sum((n + n0 - n_out) ** 2, axis=-1), shape),
        "m-m'": np.broadcast_to(np.sum((m - m_out) ** 2, axis=-1), shape),
        "m0-m'": np.broadcast_to(np.sum((m0 - m_out) ** 2, axis=-1), shape),
    }


def _envelope(magnitude: np.ndarray, distance_sq: np.ndarray) -> List[Tuple[float, float]]:
    """(<distance>, max magnitude) for each distinct distance."""
    keys = np.round(distance_sq.reshape(-1), 9)
    values = magnitude.reshape(-1)
    order = np.argsort(keys, kind="stable")
    keys, values = keys[order], values[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    peaks = np.maximum.reduceat(values, starts)
    return [(float(np.sqrt(1.0 + k)), float(v)) for k, v in zip(keys[starts], peaks)]


def _try_fit(samples: List[Tuple[float, float]], label: str, notes: List[str]) -> Optional[float]:
    try:
        return fit_decay_exponent(samples)[0]
    except VerificationError as exc:
        notes.append(f"{label}: no fit ({exc})")
        return None


def _fio_constant(b: CoefficientTensor, phases, n: int) -> float:
    return float(np.max(np.abs(b.entries) * (1.0 + _displacement_sq(b, phases)) ** n, initial=0.0))


def _pdo_constant(b: CoefficientTensor, orders: Tuple[float, float, float], smoothness: Sequence[int]) -> float:
    m1, m2, m3 = orders
    n1, n2, n3 = smoothness
    directions = _pdo_directions(b)
    growth = (
        bracket(_axis_points(b, 3)) ** m1
        * bracket(_axis_points(b, 5)) ** m2
        * bracket(_axis_points(b, 0)) ** m3
    )
    decay = (
        (1.0 + directions["n+n0-n'"]) ** n3
        * (1.0 + directions["m-m'"]) ** n1
        * (1.0 + directions["m0-m'"]) ** n2
    )
    return float(np.max(np.abs(b.entries) * decay / growth, initial=0.0))


def verify_decay_fio(
    p: FioProblem, sys: GaborSystem, n_list: Sequence[int] = (1, 2, 3), radii: Sequence[int] = (3, 4)
) -> DecayReport:
    """C_N = max |b| <grad Phi(m', n, n0..) - (n', m, m0..)>^{2N} at each truncation radius."""
    matrices = [gabor_matrix(p, sys, radius, radius) for radius in radii]
    rows = []
    for n in n_list:
        constants = tuple(_fio_constant(b, p.phases, n) for b in matrices)
        stable = _stable(constants, DECAY_STABILITY)
        if not stable:
            logger.warning("C_%d moves across radii %s: %s", n, tuple(radii), constants)
        rows.append(DecayRow((int(n),), constants, stable))
    notes: List[str] = []
    largest = matrices[-1]
    magnitude = np.abs(largest.entries)
    exponents = {}
    slope = _try_fit(_envelope(magnitude, _displacement_sq(largest, p.phases)), "displacement", notes)
    if slope is not None:
        exponents["displacement"] = slope
    consistency = {}
    if p.arity == 2 and all(phase.standard for phase in p.phases):
        for n in n_list:
            pdo = _pdo_constant(largest, (0.0, 0.0, 0.0), (n, n, n))
            if pdo > 0.0:
                consistency[int(n)] = _fio_constant(largest, p.phases, n) / pdo
    delta = phase_checks(list(p.phases), samples=50).delta_estimate
    return DecayReport("fio", tuple(radii), rows, exponents, {}, consistency, delta, notes)


def _diagonal_growth(b: CoefficientTensor, direction: str, radius: int) -> List[Tuple[float, float]]:
    """|b| along n' = n (n0 = 0), n' = n0 (n = 0) or m' = m = m0, everything else at the origin."""
    d = b.dim
    samples = []
    for k in range(radius + 1):
        step = [k] + [0] * (d - 1)
        zero = [0] * d
        if direction == "n":
            index = {"m'": zero, "n'": step, "m": zero, "n": step, "m0": zero, "n0": zero}
            point = b.steps[3] * k
        elif direction == "n0":
            index = {"m'": zero, "n'": step, "m": zero, "n": zero, "m0": zero, "n0": step}
            point = b.steps[5] * k
        else:
            index = {"m'": step, "n'": zero, "m": step, "n": zero, "m0": step, "n0": zero}
            point = b.steps[0] * k
        try:
            position = tuple(b.position(name, index[name]) for name in b.index_names)
        except GridError:
            break
        samples.append((float(np.sqrt(1.0 + point * point)), float(abs(b.entries[position]))))
    return samples


def verify_decay_pdo(
    sigma: SymbolSpec,
    sys: GaborSystem,
    smoothness: Union[Tuple[int, int, int], Sequence[Tuple[int, int, int]]],
    radii: Sequence[int] = (3, 4),
) -> DecayReport:
    """C = max |b| / (<n>^m1 <n0>^m2 <m'>^m3 <n+n0-n'>^-2N3 <m-m'>^-2N1 <m0-m'>^-2N2)."""
    if sigma.arity != 2:
        raise VerificationError(f"bilinear operator needs a symbol of arity 2, {sigma.name} has {sigma.arity}")
    tuples = [tuple(smoothness)] if np.isscalar(smoothness[0]) else [tuple(t) for t in smoothness]
    orders = _pdo_orders(sigma)
    problem = FioProblem(sigma, (linear(), linear()), sys.grid)
    matrices = [gabor_matrix(problem, sys, radius, radius) for radius in radii]
    rows = []
    for smooth in tuples:
        constants = tuple(_pdo_constant(b, orders, smooth) for b in matrices)
        stable = _stable(constants, DECAY_STABILITY)
        if not stable:
            logger.warning("C%s moves across radii %s: %s", smooth, tuple(radii), constants)
        rows.append(DecayRow(tuple(int(v) for v in smooth), constants, stable))
    notes: List[str] = []
    largest = matrices[-1]
    magnitude = np.abs(largest.entries)
    exponents = {}
    for label, distance_sq in _pdo_directions(largest).items():
        slope = _try_fit(_envelope(magnitude, distance_sq), label, notes)
        if slope is not None:
            exponents[label] = slope
    growth = {}
    for label in ("n", "n0", "m'"):
        slope = _try_fit(_diagonal_growth(largest, label, radii[-1]), f"growth {label}", notes)
        if slope is not None:
            growth[label] = slope
    return DecayReport("pdo", tuple(radii), rows, exponents, growth, {}, None, notes)


def recompute_entries(p: FioProblem, sys: GaborSystem, b: CoefficientTensor, count: int = 20, seed: Optional[int] = None) -> float:
    """Largest |b entry - <T(atoms), atom>| over random entries, by applying T to the atoms directly."""
    full = with_radius(sys, None, None)
    rng = seeded_rng(seed)
    r = b.entries.ndim // 2 - 1
    worst = 0.0
    for _ in range(count):
        position = tuple(int(rng.integers(size)) for size in b.entries.shape)
        atoms = [(b.indices[2 + 2 * k][position[2 + 2 * k]], b.indices[3 + 2 * k][position[3 + 2 * k]]) for k in range(r)]
        value = inner(apply_to_atoms(p, full, atoms), full.atom(b.indices[0][position[0]], b.indices[1][position[1]]))
        worst = max(worst, abs(value - b.entries[position]))
    return float(worst)
