import csv
import json
from pathlib import Path

import numpy as np
import pytest

from experiment import DEFAULT_CONFIG, ExperimentConfig, OPERATIONS, OperationResult, csv_text, load_config, run
from gabor import gabor_system
from grid_core import gaussian
from terms import ConfigError
from verification import GaborInputFamily

SMALL_GRID = {"d": 1, "N": 64, "R": 4.0}
CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


def _config(operation, **overrides):
    data = {"operation": operation, "grid": SMALL_GRID}
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[-1].startswith("#manifest:")
    return list(csv.reader(lines[:-1]))


def test_load_config_merges_defaults(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"grid": {"N": 32}, "trials": 5}))
    data = load_config(path)
    assert data["grid"] == {"d": 1, "N": 32, "R": 8.0}
    assert data["trials"] == 5
    assert data["tolerances"] == DEFAULT_CONFIG["tolerances"]


def test_load_config_reports_json_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "trials": 5,\n  "seed": ,\n}')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 3
    assert info.value.column > 0
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_config_terms_are_canonical():
    config = _config("verify decay-pdo", symbol=" sg( 0,0 , 0 )", phases=["phase.linear", " phase.linear "])
    assert config.settings["symbol"] == "sg(0,0,0)"
    assert config.settings["phases"] == ["phase.linear", "phase.linear"]
    again = ExperimentConfig.from_dict(json.loads(config.canonical()))
    assert again.canonical() == config.canonical()
    assert again.digest == config.digest


def test_config_errors():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"trails": 3})
    with pytest.raises(ConfigError, match="unknown operation"):
        ExperimentConfig.from_dict({"operation": "fio transpose"})
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"symbol": "sg(0, 0,"})
    assert info.value.message.startswith("symbol: ")
    assert info.value.column == 9
    with pytest.raises(ConfigError, match="phases"):
        ExperimentConfig.from_dict({"phases": ["phase.curved"]})
    with pytest.raises(ConfigError, match="grid"):
        ExperimentConfig.from_dict({"grid": {"N": 1}})


def test_exponent_settings():
    config = _config("verify bound", exponents=[[2, 2], [2, "inf"]])
    assert config.exponents(2).target == (1.0, 2.0)
    with pytest.raises(ConfigError):
        config.exponents(1)
    with pytest.raises(ConfigError):
        _config("verify bound", exponents=[[2, 2], [1, 1]], tensor=True).exponents(2)


def test_every_operation_has_help():
    from experiment import COLUMNS_HELP, OPERATION_HANDLERS

    assert set(OPERATIONS) == set(COLUMNS_HELP) == set(OPERATION_HANDLERS)


def test_identity_fio_reproduces_its_input(tmp_path):
    outcome = run(_config("fio apply", reference="input"), tmp_path)
    assert outcome.exit_code == 0
    csv_path, manifest_path = outcome.artifacts
    rows = _rows(csv_path)
    assert rows[0] == ["x", "re", "im"]
    assert len(rows) == 1 + 64
    manifest = json.loads(manifest_path.read_text())
    assert manifest["passed"] is True
    assert manifest["wall_time_s"] >= 0.0
    assert manifest["config"]["symbol"] == "one"


def test_csv_is_deterministic(tmp_path):
    config = _config("fio apply", symbol="bracket(-1)", seed=11)
    first = run(config, tmp_path / "a").artifacts[0].read_bytes()
    second = run(config, tmp_path / "b").artifacts[0].read_bytes()
    assert first == second
    other = run(config.with_seed(12), tmp_path / "c").artifacts[0].read_bytes()
    assert other != first


def test_manifest_line_reproduces_the_config(tmp_path):
    config = _config("stft", seed=5)
    outcome = run(config, tmp_path)
    manifest = json.loads(outcome.artifacts[0].read_text().splitlines()[-1][len("#manifest:"):])
    assert manifest["config_sha256"] == config.digest
    assert manifest["seed"] == 5
    rebuilt = ExperimentConfig.from_dict(manifest["config"])
    assert csv_text(rebuilt, outcome.result) == outcome.artifacts[0].read_text()


def test_stft_passes_the_moyal_check(tmp_path):
    outcome = run(_config("stft"), tmp_path)
    assert outcome.exit_code == 0
    assert len(outcome.result.rows) == 64 * 64


def test_frame_check(tmp_path):
    config = _config(
        "gabor check-frame",
        radii=[2],
        expect_frame=True,
        tolerances={"frame": 1e-6},
    )
    outcome = run(config, tmp_path)
    header, rows = outcome.result.header, outcome.result.rows
    assert header == ["radius", "atoms", "density", "lower_bound", "upper_bound", "ratio", "frame", "dual_residual", "reconstruction_error"]
    assert [row[0] for row in rows] == [2, "full"]
    full = dict(zip(header, rows[-1]))
    assert full["frame"] is True
    assert full["ratio"] == pytest.approx(full["upper_bound"] / full["lower_bound"])
    assert full["ratio"] >= 1.0
    assert 0.0 <= full["dual_residual"] < 1e-6
    assert rows[0][header.index("dual_residual")] is None
    assert outcome.exit_code == 0
    assert run(_config("gabor check-frame", radii=[], expect_frame=False), tmp_path).exit_code == 1


def test_fio_kernel_matches_the_operator(tmp_path):
    outcome = run(_config("fio kernel", symbol="bracket(-1)", phases=["phase.perturbed(0.1)"]), tmp_path)
    assert outcome.exit_code == 0
    assert outcome.result.header == ["x", "y1", "re", "im"]
    assert len(outcome.result.rows) == 64 * 64


def test_fio_matrix_entries(tmp_path):
    config = _config("fio matrix", symbol="sg(0, 0, 0)", phases=["phase.linear", "phase.linear"], gabor={"radius": 1})
    outcome = run(config, tmp_path)
    assert outcome.exit_code == 0
    assert outcome.result.header[:6] == ["m'", "n'", "m", "n", "m0", "n0"]
    assert 0 < len(outcome.result.rows) <= 3 ** 6
    manifest = json.loads(outcome.artifacts[1].read_text())
    assert manifest["passed"] is True


def test_numpy_pass_flags_become_plain_bools():
    result = OperationResult(["value"], [[1.0]], np.float64(1e-12) < 1e-10)
    assert type(result.passed) is bool
    assert json.dumps({"passed": result.passed}) == '{"passed": true}'


def test_torus_operations(tmp_path):
    base = {"symbol": "torus_bracket(-1)", "grid": {"d": 1, "N": 16, "R": 0.5}, "cutoff": 6}
    outcome = run(ExperimentConfig.from_dict({"operation": "torus apply", **base}), tmp_path)
    assert outcome.exit_code == 0
    assert len(outcome.result.rows) == 16
    spike = {"operation": "torus kernel", "symbol": "spike([1])", "cutoff": 2}
    outcome = run(ExperimentConfig.from_dict(spike), tmp_path)
    assert outcome.exit_code == 0
    assert [row[0] for row in outcome.result.rows] == [2, 4]


def test_torus_operations_reject_real_symbols(tmp_path):
    with pytest.raises(ConfigError):
        run(ExperimentConfig.from_dict({"operation": "torus apply", "symbol": "bracket(-1)", "grid": {"N": 16}}), tmp_path)
    assert not any(tmp_path.iterdir())


def test_stft_relation(tmp_path):
    config = ExperimentConfig.from_dict({"operation": "verify stft-relation", "symbol": "peaked(1)", "sample_points": 40})
    outcome = run(config, tmp_path)
    assert outcome.exit_code == 0
    assert outcome.result.rows[0][0] == 40
    assert outcome.result.rows[0][4] is None

    checked = run(ExperimentConfig.from_dict({**config.settings, "oracle": True}), tmp_path)
    assert checked.exit_code == 0
    row = dict(zip(checked.result.header, checked.result.rows[0]))
    assert 0.0 <= row["resolution_gap"] < 1e-8


def test_bound_rows(tmp_path):
    config = _config(
        "verify bound",
        operator="rank_one",
        symbol="one(2)",
        phases=["phase.linear", "phase.linear"],
        trials=10,
        radii=[4, 8],
        lebesgue=[2, 2],
    )
    outcome = run(config, tmp_path)
    header, rows = outcome.result.header, outcome.result.rows
    assert header[4:6] == ["max_ratio_r4", "max_ratio_r8"]
    assert [row[0] for row in rows] == ["modulation", "lebesgue"]
    assert rows[0][1] == "(2,2)x(2,2)->(1,1)"
    assert all(row[header.index("finite")] for row in rows)


def test_bound_sweep_reports_hypotheses(tmp_path):
    config = _config(
        "verify bound",
        symbol="sg(0, 0, 0)",
        phases=["phase.linear", "phase.linear"],
        trials=4,
        radii=[4, 8],
        tensor=True,
        sweep={"s1": [-4, 2], "smoothness": [1, 1, 1], "trials": 4},
    )
    rows = run(config, tmp_path).result.rows
    assert [row[0] for row in rows] == ["modulation", "sweep s1=-4", "sweep s1=2"]
    assert rows[1][-1] == "ok"
    assert rows[2][-1] != "ok"


def test_decay_pdo_example_writes_one_row_per_smoothness_tuple(tmp_path):
    data = load_config(CONFIG_DIR / "decay_pdo.json")
    data["operation"] = "verify decay-pdo"
    outcome = run(ExperimentConfig.from_dict(data), tmp_path)
    assert outcome.exit_code == 0
    rows = _rows(outcome.artifacts[0])
    header = rows[0]
    assert header[:6] == ["N1", "N2", "N3", "C_r3", "C_r4", "stable"]
    assert [row[:3] for row in rows[1:]] == [["1", "1", "1"], ["2", "2", "2"], ["3", "3", "3"]]
    assert len(header) == len(rows[1]) == 6 + 3 + 3 + 4


def test_decay_fio_rows(tmp_path):
    config = ExperimentConfig.from_dict(
        {
            "operation": "verify decay-fio",
            "grid": {"d": 1, "N": 128, "R": 4.0},
            "gabor": {"tight": True},
            "symbol": "one(2)",
            "phases": ["phase.linear", "phase.linear"],
            "orders": [1, 2],
            "decay_radii": [3, 4],
        }
    )
    outcome = run(config, tmp_path)
    assert outcome.exit_code == 0
    assert [row[0] for row in outcome.result.rows] == [1, 2]


def test_norm_rows(tmp_path):
    config = _config(
        "norm",
        exponents=[[2, 2], [1, "inf"]],
        weight="omega(1)",
        norm="norm(order=[n, n0, m, m0], exps=[2, 2, 2, 2])",
    )
    rows = run(config, tmp_path).result.rows
    assert [row[0] for row in rows] == ["modulation"] * 4 + ["nested"]
    assert all(row[-1] > 0 for row in rows)
    assert rows[0][3] == "omega(s=1)"


@pytest.mark.parametrize(
    "name, operation",
    [
        ("stft.json", "stft"),
        ("check_frame.json", "gabor check-frame"),
        ("fio_apply_identity.json", "fio apply"),
        ("fio_kernel.json", "fio kernel"),
        ("fio_matrix.json", "fio matrix"),
        ("torus_apply.json", "torus apply"),
        ("torus_kernel.json", "torus kernel"),
        ("stft_relation.json", "verify stft-relation"),
        ("bound.json", "verify bound"),
        ("decay_fio.json", "verify decay-fio"),
        ("decay_pdo.json", "verify decay-pdo"),
        ("norm.json", "norm"),
    ],
)
def test_example_configs_validate(name, operation):
    data = load_config(CONFIG_DIR / name)
    data["operation"] = operation
    config = ExperimentConfig.from_dict(data)
    config.symbol()
    config.phases()
    config.norm_spec()
    assert config.operation == operation


def test_bound_example_radii_select_growing_lattices():
    data = load_config(CONFIG_DIR / "bound.json")
    data["operation"] = "verify bound"
    config = ExperimentConfig.from_dict(data)
    g = config.settings["gabor"]
    family = GaborInputFamily(gabor_system(gaussian(config.grid), g["alpha"], g["beta"]))
    counts = [family.atom_count(r) for r in config.settings["radii"]]
    assert counts[0] < counts[1] == family.atom_count()
