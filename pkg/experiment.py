"""Experiment configs, the operations behind each subcommand, and their CSV artifacts."""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy
import scipy.fft as sp_fft
import sklearn

from fio_engine import FioProblem, KernelField, bk_apply, fio_apply, gabor_matrix, kernel_from_symbol
from gabor import GaborSystem, analyze, dual_residual, dual_window, frame_bounds, gabor_system, synthesize, tighten, with_radius
from grid_core import GridError, SampledField, UniformGrid, block_coordinates, gaussian, l2_norm, random_wave_packets
from symbols import PhaseSpec, SymbolError, SymbolSpec, linear
from terms import ConfigError, parse_term, resolve_norm, resolve_phase, resolve_symbol, resolve_weight, serialize
from tf_analysis import NestedNormSpec, mixed_norm, modulation_norm, nested_mixed_norm, stft
from torus_engine import check_kernel_symbol_m1, random_trig_polynomial, torus_bk_apply, torus_fio_apply, torus_grid, torus_kernel
from utils import DEFAULT_SEED, atomic_write, config_digest, normalize_run_id, resolve_output_dir, seeded_rng
from verification import (
    ExponentTuple,
    GaborInputFamily,
    VerificationError,
    product_gaussian,
    recompute_entries,
    refined_grid,
    relation_sample_points,
    sweep_s1,
    verify_boundedness,
    verify_decay_fio,
    verify_decay_pdo,
    verify_kernel_symbol_stft,
    verify_lebesgue_bound,
    weighted_matrix_norms,
)
from weights import Weight

logger = logging.getLogger(__name__)

__version__ = "0.1.0"

# -----------------------------
# Configuration
# -----------------------------

DEFAULT_CONFIG: Dict[str, Any] = {
    "operation": "fio apply",
    "grid": {"d": 1, "N": 128, "R": 8.0},
    "gabor": {"alpha": 0.5, "beta": 0.5, "radius": 3, "tight": False},
    "symbol": "one",
    "phases": ["phase.linear"],
    "operator": "fio",
    "packets": 4,
    "reference": "kernel",
    "weight": None,
    "target_weight": None,
    "exponents": None,
    "tensor": False,
    "lebesgue": None,
    "sweep": None,
    "trials": 100,
    "radii": [8, 16],
    "decay": 3.0,
    "orders": [1, 2, 3],
    "smoothness": [[1, 1, 1]],
    "decay_radii": [3, 4],
    "matrix_norms": False,
    "matrix_floor": 1e-10,
    "cutoff": 4,
    "sample_points": 100,
    "oracle": False,
    "norm": None,
    "expect_frame": None,
    "seed": DEFAULT_SEED,
    "tolerances": {
        "moyal": 1e-8,
        "frame": 1e-8,
        "apply": 1e-6,
        "matrix": 1e-10,
        "torus": 1e-10,
        "relation": 1e-5,
    },
    "output": None,
}

NESTED_KEYS = ("grid", "gabor", "tolerances")

OPERATIONS: Tuple[str, ...] = (
    "stft",
    "gabor check-frame",
    "fio apply",
    "fio kernel",
    "fio matrix",
    "torus apply",
    "torus kernel",
    "verify stft-relation",
    "verify bound",
    "verify decay-fio",
    "verify decay-pdo",
    "norm",
)

COLUMNS_HELP: Dict[str, str] = {
    "stft": "columns: time, frequency, magnitude of V_g f for one wave-packet signal",
    "gabor check-frame": "columns: radius, atoms, density, lower_bound, upper_bound, ratio (B/A), frame, dual_residual, reconstruction_error",
    "fio apply": "columns: x, re, im of T(f_1..f_r) on the grid",
    "fio kernel": "columns: x, y1..yr, re, im of the kernel",
    "fio matrix": "columns: m', n', m, n, .., magnitude, re, im for entries above matrix_floor",
    "torus apply": "columns: x, re, im on the torus grid",
    "torus kernel": "columns: cutoff, symbol_norm, kernel_norm, ratio",
    "verify stft-relation": "columns: points, max_deviation, max_magnitude, snap_distance, resolution_gap, tolerance",
    "verify bound": "columns: kind, exponents, weight, target_weight, max_ratio per radius, trials, family, seed, finite, stable, hypotheses",
    "verify decay-fio": "columns: N, C per radius, stable, consistency, displacement_slope, delta",
    "verify decay-pdo": "columns: N1, N2, N3, C per radius, stable, slopes per direction, growth per direction",
    "norm": "columns: kind, signal, spec, weight, value",
}


def _merge(base: Dict[str, Any], data: Dict[str, Any]) -> Dict[str, Any]:
    merged = {**base, **data}
    for key in NESTED_KEYS:
        if isinstance(data.get(key), dict):
            merged[key] = {**base[key], **data[key]}
    return merged


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object", 1, 1)
    return _merge(DEFAULT_CONFIG, data)


def _canonical_term(key: str, text: Any, resolver: Callable[[Any], Any]) -> str:
    if not isinstance(text, str):
        raise ConfigError(f"{key}: expected a term string, got {text!r}")
    try:
        term = parse_term(text)
        resolver(term)
    except ConfigError as exc:
        raise ConfigError(f"{key}: {exc.message}", exc.line, exc.column) from exc
    return serialize(term)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings; every term is stored in canonical form."""

    settings: Dict[str, Any] = field(repr=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(DEFAULT_CONFIG))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        settings = _merge(DEFAULT_CONFIG, data)
        if settings["operation"] not in OPERATIONS:
            raise ConfigError(f"unknown operation {settings['operation']!r}")
        settings["symbol"] = _canonical_term("symbol", settings["symbol"], resolve_symbol)
        phases = settings["phases"]
        if not isinstance(phases, list):
            raise ConfigError(f"phases: expected a list of terms, got {phases!r}")
        settings["phases"] = [_canonical_term(f"phases[{k}]", text, resolve_phase) for k, text in enumerate(phases)]
        for key in ("weight", "target_weight"):
            if settings[key] is not None:
                settings[key] = _canonical_term(key, settings[key], resolve_weight)
        if settings["norm"] is not None:
            settings["norm"] = _canonical_term("norm", settings["norm"], resolve_norm)
        config = cls(settings)
        if config.grid.n % 2:
            raise ConfigError(f"grid: N must be even, got {config.grid.n}")
        return config

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig({**self.settings, "seed": int(seed)})

    @property
    def operation(self) -> str:
        return self.settings["operation"]

    @property
    def seed(self) -> int:
        return int(self.settings["seed"])

    def canonical(self) -> str:
        return json.dumps(self.settings, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return config_digest(self.canonical())

    def rng(self) -> np.random.Generator:
        return seeded_rng(self.seed)

    def tolerance(self, key: str) -> float:
        return float(self.settings["tolerances"][key])

    @property
    def grid(self) -> UniformGrid:
        g = self.settings["grid"]
        try:
            return UniformGrid(int(g["d"]), int(g["N"]), float(g["R"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def symbol(self) -> SymbolSpec:
        return resolve_symbol(self.settings["symbol"])

    def phases(self) -> List[PhaseSpec]:
        return [resolve_phase(text) for text in self.settings["phases"]]

    def weight(self, key: str = "weight") -> Optional[Weight]:
        text = self.settings[key]
        return None if text is None else resolve_weight(text)

    def norm_spec(self) -> Optional[NestedNormSpec]:
        text = self.settings["norm"]
        return None if text is None else resolve_norm(text)

    def problem(self, grid: Optional[UniformGrid] = None) -> FioProblem:
        try:
            return FioProblem(self.symbol(), tuple(self.phases()), grid or self.grid)
        except SymbolError as exc:
            raise ConfigError(f"symbol/phases: {exc}") from exc

    def gabor_system(self, grid: Optional[UniformGrid] = None) -> GaborSystem:
        g = self.settings["gabor"]
        grid = grid or self.grid
        try:
            sys = gabor_system(gaussian(grid), float(g["alpha"]), float(g["beta"]))
        except GridError as exc:
            raise ConfigError(f"gabor: {exc}") from exc
        return tighten(sys) if g.get("tight") else sys

    def exponents(self, arity: int) -> ExponentTuple:
        raw = self.settings["exponents"] or [[2, 2]] * arity
        try:
            pairs = tuple((float(p), float(q)) for p, q in raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"exponents: expected [p, q] pairs, got {raw!r}") from exc
        if len(pairs) != arity:
            raise ConfigError(f"exponents: operator takes {arity} inputs, got {len(pairs)} pairs")
        try:
            if self.settings["tensor"]:
                return ExponentTuple(pairs, pairs[0], tensor=True)
            return ExponentTuple.holder(*pairs)
        except VerificationError as exc:
            raise ConfigError(f"exponents: {exc}") from exc


# -----------------------------
# Operations
# -----------------------------


@dataclass
class OperationResult:
    header: List[str]
    rows: List[List[Any]]
    passed: bool
    summary: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b))) / (scale if scale > 0.0 else 1.0)


def _coordinate_names(blocks: Sequence[UniformGrid], prefixes: Sequence[str]) -> List[str]:
    names = []
    for block, prefix in zip(blocks, prefixes):
        names.extend([prefix] if block.dim == 1 else [f"{prefix}_{k + 1}" for k in range(block.dim)])
    return names


def _field_rows(f: SampledField) -> List[List[Any]]:
    shape = f.data.shape
    columns = [np.broadcast_to(c, shape + c.shape[-1:]).reshape(-1, c.shape[-1]) for c in block_coordinates(f.blocks)]
    coords = np.concatenate(columns, axis=1)
    values = f.data.reshape(-1)
    return [list(map(float, point)) + [float(v.real), float(v.imag)] for point, v in zip(coords, values)]


def _signals(config: ExperimentConfig, grid: UniformGrid, count: int) -> List[SampledField]:
    rng = config.rng()
    return [random_wave_packets(grid, rng, int(config.settings["packets"])) for _ in range(count)]


def run_stft(config: ExperimentConfig) -> OperationResult:
    grid = config.grid
    f = _signals(config, grid, 1)[0]
    g = gaussian(grid)
    F = stft(f, g)
    expected = l2_norm(f) * l2_norm(g)
    moyal = abs(mixed_norm(F, 2, 2) - expected) / expected
    d = grid.dim
    times = F.time_grid.points().reshape(-1, d)
    freqs = F.freq_grid.points().reshape(-1, d)
    magnitude = np.abs(F.values).reshape(len(times), len(freqs))
    rows = [list(map(float, t)) + list(map(float, xi)) + [float(magnitude[i, j])] for i, t in enumerate(times) for j, xi in enumerate(freqs)]
    header = _coordinate_names([grid, grid], ["time", "frequency"]) + ["magnitude"]
    passed = moyal < config.tolerance("moyal")
    return OperationResult(header, rows, passed, {"Moyal deviation": f"{moyal:.3e}"})


def run_check_frame(config: ExperimentConfig) -> OperationResult:
    grid = config.grid
    sys = config.gabor_system(grid)
    rows = []
    lower = upper = 0.0
    for radius in list(config.settings["radii"]) + [None]:
        part = with_radius(sys, radius, radius)
        lower, upper = frame_bounds(part)
        ratio = upper / lower if lower > 0.0 else float("inf")
        rows.append(["full" if radius is None else radius, part.lattice.size, part.lattice.density, lower, upper, ratio, lower > 1e-6, None, None])
    is_frame = lower > 1e-6
    residual = error = None
    if is_frame:
        f = _signals(config, grid, 1)[0]
        gamma = dual_window(sys)
        residual = dual_residual(sys, gamma)
        rebuilt = synthesize(sys.with_window(gamma), analyze(sys, f))
        error = float(np.linalg.norm(rebuilt.data - f.data) / np.linalg.norm(f.data))
        rows[-1][-2:] = [residual, error]
    expect = config.settings["expect_frame"]
    tol = config.tolerance("frame")
    passed = (expect is None or bool(expect) == is_frame) and (error is None or (residual < tol and error < tol))
    header = ["radius", "atoms", "density", "lower_bound", "upper_bound", "ratio", "frame", "dual_residual", "reconstruction_error"]
    summary = {"frame": str(is_frame), "bounds": f"A={lower:.4g}, B={upper:.4g}, B/A={rows[-1][5]:.4g}"}
    if error is not None:
        summary["dual residual"] = f"{residual:.3e}"
        summary["reconstruction error"] = f"{error:.3e}"
    return OperationResult(header, rows, passed, summary)


def _apply_reference(config: ExperimentConfig, p: FioProblem, fs: List[SampledField]) -> np.ndarray:
    reference = config.settings["reference"]
    if reference == "input":
        return fs[0].data
    if reference == "product":
        return np.prod([f.data for f in fs], axis=0)
    if reference == "kernel":
        return bk_apply(kernel_from_symbol(p), *fs).data
    raise ConfigError(f"reference: expected input, product or kernel, got {reference!r}")


def run_fio_apply(config: ExperimentConfig) -> OperationResult:
    p = config.problem()
    fs = _signals(config, p.grid, p.arity)
    out = fio_apply(p, *fs)
    deviation = _relative(out.data, _apply_reference(config, p, fs))
    header = _coordinate_names([p.grid], ["x"]) + ["re", "im"]
    passed = deviation < config.tolerance("apply")
    return OperationResult(header, _field_rows(out), passed, {"reference": config.settings["reference"], "relative deviation": f"{deviation:.3e}"})


def run_fio_kernel(config: ExperimentConfig) -> OperationResult:
    p = config.problem()
    K = kernel_from_symbol(p)
    fs = _signals(config, p.grid, p.arity)
    deviation = _relative(bk_apply(K, *fs).data, fio_apply(p, *fs).data)
    prefixes = ["x"] + [f"y{k + 1}" for k in range(p.arity)]
    header = _coordinate_names(K.data.blocks, prefixes) + ["re", "im"]
    passed = deviation < config.tolerance("apply")
    return OperationResult(header, _field_rows(K.data), passed, {"kernel vs operator": f"{deviation:.3e}"})


def run_fio_matrix(config: ExperimentConfig) -> OperationResult:
    p = config.problem()
    sys = config.gabor_system(p.grid)
    radius = config.settings["gabor"]["radius"]
    b = gabor_matrix(p, sys, radius, radius)
    deviation = recompute_entries(p, sys, b, count=20, seed=config.seed)
    floor = float(config.settings["matrix_floor"])
    header = [f"{name}_{k + 1}" if b.dim > 1 else name for name in b.index_names for k in range(b.dim)]
    header += ["magnitude", "re", "im"]
    rows = []
    for position in zip(*np.nonzero(np.abs(b.entries) >= floor)):
        value = b.entries[position]
        indices = [int(v) for axis, k in enumerate(position) for v in b.indices[axis][k]]
        rows.append(indices + [float(abs(value)), float(value.real), float(value.imag)])
    passed = bool(deviation < config.tolerance("matrix"))
    summary = {"shape": str(b.entries.shape), "entries written": str(len(rows)), "recomputed deviation": f"{deviation:.3e}"}
    return OperationResult(header, rows, passed, summary)


def run_torus_apply(config: ExperimentConfig) -> OperationResult:
    sigma, phases = config.symbol(), config.phases()
    grid = torus_grid(int(config.settings["grid"]["N"]), int(config.settings["grid"]["d"]))
    cutoff = int(config.settings["cutoff"])
    rng = config.rng()
    signals = [random_trig_polynomial(cutoff, rng, grid.dim) for _ in range(sigma.arity)]
    try:
        out = torus_fio_apply(sigma, phases, signals, grid)
        K = torus_kernel(sigma, phases, cutoff, grid)
    except (SymbolError, GridError) as exc:
        raise ConfigError(f"torus: {exc}") from exc
    deviation = _relative(torus_bk_apply(K, signals).data, out.data)
    passed = deviation < config.tolerance("torus")
    header = _coordinate_names([grid], ["x"]) + ["re", "im"]
    return OperationResult(header, _field_rows(out), passed, {"kernel vs operator": f"{deviation:.3e}"})


def run_torus_kernel(config: ExperimentConfig) -> OperationResult:
    try:
        report = check_kernel_symbol_m1(config.symbol(), config.phases(), int(config.settings["cutoff"]))
    except SymbolError as exc:
        raise ConfigError(f"torus: {exc}") from exc
    rows = [[c, s, k, r] for c, s, k, r in zip(report.cutoffs, report.symbol_norms, report.kernel_norms, report.ratios)]
    passed = report.finite and report.stable
    return OperationResult(["cutoff", "symbol_norm", "kernel_norm", "ratio"], rows, passed, {"stable": str(report.stable)})


def run_stft_relation(config: ExperimentConfig) -> OperationResult:
    p = config.problem()
    G = product_gaussian(p.grid, p.arity + 1)
    oracle = product_gaussian(refined_grid(p.grid), p.arity + 1) if config.settings["oracle"] else None
    points = relation_sample_points(p, int(config.settings["sample_points"]), config.seed)
    report = verify_kernel_symbol_stft(p, G, points, oracle)
    tol = config.tolerance("relation")
    row = [report.points, report.max_deviation, report.max_magnitude, report.snap_distance, report.resolution_gap, tol]
    passed = report.max_deviation < tol and (report.resolution_gap is None or report.resolution_gap < tol)
    summary = {"max deviation": f"{report.max_deviation:.3e}"}
    if report.resolution_gap is not None:
        summary["2x resolution gap"] = f"{report.resolution_gap:.3e}"
    return OperationResult(
        ["points", "max_deviation", "max_magnitude", "snap_distance", "resolution_gap", "tolerance"],
        [row],
        passed,
        summary,
    )


def _bound_operator(config: ExperimentConfig) -> Union[FioProblem, KernelField]:
    kind = config.settings["operator"]
    if kind == "fio":
        return config.problem()
    if kind == "kernel":
        return kernel_from_symbol(config.problem())
    if kind == "rank_one":
        return KernelField(product_gaussian(config.grid, config.symbol().arity + 1))
    raise ConfigError(f"operator: expected fio, kernel or rank_one, got {kind!r}")


def _bound_row(kind: str, report, hypotheses: str = "") -> List[Any]:
    return (
        [kind, report.exponents.label, report.weight, report.target_weight]
        + list(report.max_ratios)
        + [report.trials, report.family, report.seed, report.finite, report.stable, hypotheses]
    )


def run_verify_bound(config: ExperimentConfig) -> OperationResult:
    s = config.settings
    op = _bound_operator(config)
    g = s["gabor"]
    radii = [int(r) for r in s["radii"]]
    trials = int(s["trials"])
    try:
        family = GaborInputFamily(gabor_system(gaussian(op.grid), float(g["alpha"]), float(g["beta"])), float(s["decay"]))
    except GridError as exc:
        raise ConfigError(f"gabor: {exc}") from exc
    reports = []
    rows = []
    report = verify_boundedness(
        op, config.exponents(op.arity), config.weight(), trials, family, config.weight("target_weight"), radii, config.seed
    )
    reports.append(report)
    rows.append(_bound_row("modulation", report))
    if s["lebesgue"]:
        try:
            report = verify_lebesgue_bound(op, [float(a) for a in s["lebesgue"]], trials, family, radii, config.seed)
        except VerificationError as exc:
            raise ConfigError(f"lebesgue: {exc}") from exc
        reports.append(report)
        rows.append(_bound_row("lebesgue", report))
    if s["sweep"]:
        sweep = s["sweep"]
        for row in sweep_s1(
            config.symbol(),
            family,
            [float(v) for v in sweep["s1"]],
            float(sweep.get("s2", 0.0)),
            tuple(int(n) for n in sweep["smoothness"]),
            float(sweep.get("p", 2.0)),
            float(sweep.get("q", 2.0)),
            int(sweep.get("trials", trials)),
            radii,
            config.seed,
        ):
            rows.append(_bound_row(f"sweep s1={row.s1:g}", row.report, "ok" if row.hypotheses_ok else "; ".join(row.problems)))
            if row.hypotheses_ok:
                reports.append(row.report)
    header = ["kind", "exponents", "weight", "target_weight"] + [f"max_ratio_r{r}" for r in radii]
    header += ["trials", "family", "seed", "finite", "stable", "hypotheses"]
    passed = all(r.finite and r.stable for r in reports)
    return OperationResult(header, rows, passed, {"rows": str(len(rows)), "max ratio": f"{reports[0].max_ratio:.4g}"})


def run_decay_fio(config: ExperimentConfig) -> OperationResult:
    p = config.problem()
    sys = config.gabor_system(p.grid)
    radii = [int(r) for r in config.settings["decay_radii"]]
    report = verify_decay_fio(p, sys, [int(n) for n in config.settings["orders"]], radii)
    slope = report.exponents.get("displacement")
    rows = [
        list(row.orders) + list(row.constants) + [row.stable, report.consistency.get(row.orders[0]), slope, report.delta]
        for row in report.rows
    ]
    header = ["N"] + [f"C_r{r}" for r in radii] + ["stable", "consistency", "displacement_slope", "delta"]
    passed = report.stable and all(np.isfinite(c) for row in report.rows for c in row.constants)
    return OperationResult(header, rows, passed, {"stable": str(report.stable), "notes": "; ".join(report.notes) or "-"})


DIRECTIONS = ("n+n0-n'", "m-m'", "m0-m'")
GROWTH = ("n", "n0", "m'")


def run_decay_pdo(config: ExperimentConfig) -> OperationResult:
    sigma = config.symbol()
    sys = config.gabor_system()
    radii = [int(r) for r in config.settings["decay_radii"]]
    smoothness = [tuple(int(n) for n in t) for t in config.settings["smoothness"]]
    try:
        report = verify_decay_pdo(sigma, sys, smoothness, radii)
    except VerificationError as exc:
        raise ConfigError(f"symbol: {exc}") from exc
    norm_columns: Dict[str, float] = {}
    if config.settings["matrix_norms"]:
        b = gabor_matrix(FioProblem(sigma, (linear(), linear()), sys.grid), sys, radii[-1], radii[-1])
        norm_columns = weighted_matrix_norms(b, config.weight(), config.weight("target_weight"))
    rows = []
    for row in report.rows:
        rows.append(
            list(row.orders)
            + list(row.constants)
            + [row.stable]
            + [report.exponents.get(k) for k in DIRECTIONS]
            + [report.growth.get(k) for k in GROWTH]
            + list(norm_columns.values())
        )
    header = ["N1", "N2", "N3"] + [f"C_r{r}" for r in radii] + ["stable"]
    header += [f"slope {k}" for k in DIRECTIONS] + [f"growth {k}" for k in GROWTH] + list(norm_columns)
    return OperationResult(header, rows, report.stable, {"stable": str(report.stable), "notes": "; ".join(report.notes) or "-"})


def run_norm(config: ExperimentConfig) -> OperationResult:
    grid = config.grid
    weight = config.weight()
    window = gaussian(grid)
    pairs = config.settings["exponents"] or [[2, 2]]
    spec = config.norm_spec()
    count = 1 if spec is None else max(1, len(spec.index_order) // 2)
    fs = _signals(config, grid, count)
    label = weight.label if weight is not None else "one"
    rows = []
    for k, f in enumerate(fs):
        for p, q in pairs:
            rows.append(["modulation", k, f"({float(p):g},{float(q):g})", label, modulation_norm(f, window, float(p), float(q), weight)])
    if spec is not None:
        T = analyze(config.gabor_system(grid), *fs)
        try:
            value = nested_mixed_norm(T, spec)
        except GridError as exc:
            raise ConfigError(f"norm: {exc}") from exc
        rows.append(["nested", "all", config.settings["norm"], "one", value])
    passed = all(np.isfinite(row[-1]) for row in rows)
    return OperationResult(["kind", "signal", "spec", "weight", "value"], rows, passed, {"rows": str(len(rows))})


OPERATION_HANDLERS: Dict[str, Callable[[ExperimentConfig], OperationResult]] = {
    "stft": run_stft,
    "gabor check-frame": run_check_frame,
    "fio apply": run_fio_apply,
    "fio kernel": run_fio_kernel,
    "fio matrix": run_fio_matrix,
    "torus apply": run_torus_apply,
    "torus kernel": run_torus_kernel,
    "verify stft-relation": run_stft_relation,
    "verify bound": run_verify_bound,
    "verify decay-fio": run_decay_fio,
    "verify decay-pdo": run_decay_pdo,
    "norm": run_norm,
}


# -----------------------------
# Artifacts
# -----------------------------


def versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "tfio": __version__,
    }


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def manifest_line(config: ExperimentConfig) -> str:
    manifest = {
        "config_sha256": config.digest,
        "seed": config.seed,
        "versions": versions(),
        "config": config.settings,
    }
    return "#manifest:" + json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def csv_text(config: ExperimentConfig, result: OperationResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(result.header)
    for row in result.rows:
        writer.writerow([_cell(v) for v in row])
    buffer.write(manifest_line(config) + "\n")
    return buffer.getvalue()


@dataclass
class RunOutcome:
    exit_code: int
    result: OperationResult
    artifacts: List[Path]
    wall_time: float


def run(config: ExperimentConfig, out: Optional[Union[str, Path]] = None, threads: Optional[int] = None) -> RunOutcome:
    """Run the configured operation and write `<op>.csv` plus `manifest.json` under a per-config directory."""
    handler = OPERATION_HANDLERS[config.operation]
    workers = sp_fft.set_workers(threads) if threads else contextlib.nullcontext()
    start = time.perf_counter()
    with workers:
        result = handler(config)
    wall_time = time.perf_counter() - start
    base = resolve_output_dir(out or config.settings["output"])
    run_dir = base / normalize_run_id(f"{config.operation}-{config.digest[:12]}")
    csv_path = run_dir / f"{normalize_run_id(config.operation)}.csv"
    atomic_write(csv_path, csv_text(config, result))
    manifest = {
        "config_sha256": config.digest,
        "seed": config.seed,
        "versions": versions(),
        "config": config.settings,
        "wall_time_s": wall_time,
        "passed": result.passed,
        "artifacts": [csv_path.name],
    }
    manifest_path = run_dir / "manifest.json"
    atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True))
    if result.passed:
        logger.info("%s passed in %.2fs; artifacts in %s", config.operation, wall_time, run_dir)
    else:
        logger.warning("%s failed its tolerance checks; artifacts in %s", config.operation, run_dir)
    return RunOutcome(0 if result.passed else 1, result, [csv_path, manifest_path], wall_time)
