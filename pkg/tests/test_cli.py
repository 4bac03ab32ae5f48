import json
import math

import numpy as np
import pandas as pd
import pytest

import app
from config.settings import DEFAULT_RUN_CONFIG, EXIT_CODES, OUTPUT_FILES, SWEEP_COLUMNS, TRAJECTORY_COLUMNS
from data.loaders import RunConfig, build_initial_state, load_run_config
from reports.writers import csv_text, read_csv_report, read_json_report, write_csv
from services.analysis import DecayFit
from services.grid import mode_field
from services.operators import SpectralReport, lambda_pair
from utils.cache_functions import cached_discrete_eigenvalues
from utils.errors import ConfigError
from utils.helpers import config_sha256, deep_merge, parse_complex


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_default_spectrum(capsys):
    assert app.main(["spectrum"]) == EXIT_CODES["success"]
    report = _stdout_json(capsys)
    assert report["lambda0"] == pytest.approx(0.5, abs=1e-4)
    assert report["command"] == "spectrum"
    assert report["config_sha256"] == config_sha256(DEFAULT_RUN_CONFIG)
    assert SpectralReport.from_dict(report).modes[0].regime == "complex"


def test_malformed_config_exit_code(write_config, tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"params": {"c": 1.0,', encoding="utf-8")
    assert app.main(["spectrum", "--config", str(path)]) == EXIT_CODES["config"]
    assert "config" in capsys.readouterr().err


@pytest.mark.parametrize(
    "data, field",
    [
        ({"params": {"c": 1.0, "speed": 2.0}}, "params.speed"),
        ({"solver": {}}, "solver"),
        ({"params": {"b": "fast"}}, "params.b"),
        ({"scheme": {"parabolicity_margin": 0.5}}, "scheme.parabolicity_margin"),
        ({"grid": {"n_per_axis": [1]}}, "grid.n_per_axis"),
        ({"norm": {"p": 12}}, "norm.p"),
        ({"sweep": {"amplitudes": [0.2, 0.1]}}, "sweep.amplitudes"),
        ({"initial": {"mode": "x"}}, "initial.mode"),
        ({"initial": {"mode": None}}, "initial.mode"),
        ({"initial": {"mode": 1.7}}, "initial.mode"),
        ({"initial": {"mode": [1, 2]}}, "initial.mode"),
        ({"domain": {"kind": ["interval"]}}, "domain.kind"),
        ({"domain": {"kind": "rectangle", "lengths": [1.0, 1.0]}, "grid": {"n_per_axis": [5, 5]}, "initial": {"mode": [1, 2.0]}}, "initial.mode"),
    ],
)
def test_invalid_config_names_the_field(data, field, write_config, capsys):
    assert app.main(["spectrum", "--config", write_config(data)]) == EXIT_CODES["config"]
    assert field in capsys.readouterr().err


def test_config_merge_keeps_defaults():
    merged = deep_merge(DEFAULT_RUN_CONFIG, {"params": {"k": 2.0}})
    assert merged["params"] == {"c": 1.0, "b": 1.0, "k": 2.0}
    assert DEFAULT_RUN_CONFIG["params"]["k"] == 1.0
    with pytest.raises(ConfigError):
        deep_merge(DEFAULT_RUN_CONFIG, {"params": 3})


def test_low_exponent_warns(caplog):
    with caplog.at_level("WARNING", logger="data.loaders"):
        RunConfig.from_dict({"norm": {"p": 1.2}})
    assert "well-posedness" in caplog.text


def test_parse_complex():
    assert parse_complex("-1,0.5") == complex(-1.0, 0.5)
    assert parse_complex("2") == 2.0
    for text in ("1,2,3", "a,b", "1,", "nan,0"):
        with pytest.raises(ConfigError):
            parse_complex(text)


def test_resolvent_command(write_config, small_run, capsys):
    path = write_config(small_run)
    assert app.main(["resolvent", "--config", path, "--lambda=-1,0.5"]) == EXIT_CODES["success"]
    report = _stdout_json(capsys)
    assert report["status"] == "ok"
    assert report["residual"] <= report["tol"]
    assert report["mu_re"] + 1j * report["mu_im"] == pytest.approx((-1 + 0.5j) ** 2 / (-1 + 0.5j - 1.0))


def test_resolvent_accepts_spaced_negative_lambda(write_config, small_run, capsys):
    assert app.main(["resolvent", "--config", write_config(small_run), "--lambda", "-1,0.5"]) == EXIT_CODES["success"]
    report = _stdout_json(capsys)
    assert (report["lambda_re"], report["lambda_im"]) == (-1.0, 0.5)
    assert report["residual"] <= report["tol"]


def test_initial_coefficient_spectrum_and_resolvent(write_config, small_run, capsys):
    assert app.main(["spectrum", "--config", write_config(small_run)]) == EXIT_CODES["success"]
    unit = _stdout_json(capsys)
    data = deep_merge(small_run, {"spectrum": {"coefficient": "initial"}, "initial": {"u0_amplitude": 0.3}})
    path = write_config(data)

    assert app.main(["spectrum", "--config", path]) == EXIT_CODES["success"]
    frozen = _stdout_json(capsys)
    assert frozen["lambda0_continuum"] is None
    assert frozen["lambda1_A"] > unit["lambda1_A"]

    assert app.main(["resolvent", "--config", path, "--lambda=-1,0.5"]) == EXIT_CODES["success"]
    report = _stdout_json(capsys)
    assert report["status"] == "ok"
    assert report["residual"] <= report["tol"]

    over = write_config(deep_merge(data, {"initial": {"u0_amplitude": 0.6}}), name="over.json")
    assert app.main(["spectrum", "--config", over]) == EXIT_CODES["config"]


def test_resolvent_on_singular_line(write_config, small_run):
    assert app.main(["resolvent", "--config", write_config(small_run), "--lambda=1,0"]) == EXIT_CODES["config"]


def test_resolvent_at_an_eigenvalue(write_config, small_run, capsys):
    config = load_run_config(write_config(small_run))
    lam, _ = lambda_pair(cached_discrete_eigenvalues(config.grid)[0], config.params)
    argv = ["resolvent", "--config", write_config(small_run), f"--lambda={lam.real!r},{lam.imag!r}"]
    assert app.main(argv) == EXIT_CODES["numerical"]
    assert _stdout_json(capsys)["status"] == "singular_resolvent"


def test_simulate_zero_data(write_config, small_run, tmp_path):
    data = deep_merge(small_run, {"initial": {"u0_amplitude": 0.0}, "scheme": {"t_end": 1.0}})
    out = tmp_path / "out"
    assert app.main(["simulate", "--config", write_config(data), "--out", str(out)]) == EXIT_CODES["success"]
    frame = read_csv_report(out / OUTPUT_FILES["trajectory"])
    assert list(frame.columns) == TRAJECTORY_COLUMNS
    assert not frame[TRAJECTORY_COLUMNS[1:4]].to_numpy().any()
    summary = read_json_report(out / OUTPUT_FILES["summary"])
    assert summary["status"] == "completed"
    assert (out / OUTPUT_FILES["metadata"]).exists()


def test_simulate_over_amplitude(write_config, small_run, tmp_path):
    data = deep_merge(small_run, {"initial": {"u0_amplitude": 0.6}})
    out = tmp_path / "out"
    assert app.main(["simulate", "--config", write_config(data), "--out", str(out)]) == EXIT_CODES["parabolicity"]
    summary = read_json_report(out / OUTPUT_FILES["summary"])
    assert summary["status"] == "parabolicity_violation"
    assert summary["violation_time"] == 0.0


def test_simulate_outputs_are_byte_identical(write_config, small_run, tmp_path):
    data = deep_merge(small_run, {"initial": {"u0_amplitude": 0.05}, "scheme": {"t_end": 2.0}})
    path = write_config(data)
    for name in ("a", "b"):
        assert app.main(["simulate", "--config", path, "--out", str(tmp_path / name)]) == 0
    for name in (OUTPUT_FILES["trajectory"], OUTPUT_FILES["summary"]):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert b"\r\n" not in (tmp_path / "a" / OUTPUT_FILES["trajectory"]).read_bytes()


def test_trajectory_csv_round_trip(write_config, small_run, tmp_path):
    from services.lab_service import LabService

    data = deep_merge(small_run, {"initial": {"u0_amplitude": 0.01}, "scheme": {"t_end": 1.0}})
    result = LabService(load_run_config(write_config(data))).run_simulate()
    frame = result.files[OUTPUT_FILES["trajectory"]]
    write_csv(tmp_path / "t.csv", frame)
    pd.testing.assert_frame_equal(read_csv_report(tmp_path / "t.csv"), frame, check_exact=True)


def test_csv_keeps_seventeen_digits():
    frame = pd.DataFrame({"x": [1.0 / 3.0, math.pi]})
    lines = csv_text(frame).splitlines()
    assert lines[0] == "x"
    assert float(lines[1]) == 1.0 / 3.0
    assert float(lines[2]) == math.pi


def test_decay_command(write_config, small_run, tmp_path):
    data = deep_merge(small_run, {"initial": {"u0_amplitude": 1e-3}})
    out = tmp_path / "out"
    assert app.main(["decay", "--config", write_config(data), "--out", str(out)]) == EXIT_CODES["success"]
    report = read_json_report(out / OUTPUT_FILES["decay"])
    assert report["command"] == "decay"
    assert len(report["config_sha256"]) == 64
    fit = DecayFit.from_dict(report["fit"])
    assert fit.method == "peak_envelope"
    assert fit.omega_hat > 0.45
    assert fit.lambda0 == pytest.approx(0.5, rel=1e-2)
    frame = read_csv_report(out / OUTPUT_FILES["decay_fit"])
    assert list(frame.columns) == list(DecayFit.__dataclass_fields__)
    assert frame["omega_hat"].iloc[0] == report["fit"]["omega_hat"]
    assert frame["method"].iloc[0] == "peak_envelope"


def test_decay_over_amplitude(write_config, small_run, capsys):
    data = deep_merge(small_run, {"initial": {"u0_amplitude": 0.6}})
    assert app.main(["decay", "--config", write_config(data)]) == EXIT_CODES["parabolicity"]
    report = _stdout_json(capsys)
    assert report["fit"] is None


def test_sweep_command(write_config, small_run, tmp_path):
    data = deep_merge(small_run, {"sweep": {"amplitudes": [1e-3, 0.1, 0.6]}})
    out = tmp_path / "out"
    assert app.main(["sweep", "--config", write_config(data), "--out", str(out), "--jobs", "2"]) == 0
    table = read_csv_report(out / OUTPUT_FILES["sweep"])
    assert list(table.columns) == SWEEP_COLUMNS
    assert list(table["status"]) == ["completed", "completed", "parabolicity_violation"]
    summary = read_json_report(out / OUTPUT_FILES["sweep_summary"])
    assert summary["largest_decaying_amplitude"] == 0.1
    assert summary["smallest_violating_amplitude"] == 0.6
    assert len(summary["table"]) == len(table)
    for record, (_, row) in zip(summary["table"], table.iterrows()):
        for column in SWEEP_COLUMNS:
            if isinstance(row[column], float) and math.isnan(row[column]):
                assert record[column] is None
            else:
                assert record[column] == row[column]


def test_sweep_rejects_zero_jobs(write_config, small_run):
    assert app.main(["sweep", "--config", write_config(small_run), "--jobs", "0"]) == EXIT_CODES["config"]


def test_nodal_file_initial_data(write_config, small_run, tmp_path):
    config = load_run_config(write_config(small_run))
    shape = mode_field(config.grid, 2).values
    pd.DataFrame({"u0": shape, "u1": -shape}).to_csv(tmp_path / "nodal.csv", index=False, float_format="%.17g")
    data = deep_merge(small_run, {"initial": {"nodal_file": "nodal.csv", "u0_amplitude": 0.5, "u1_amplitude": 0.25}})
    state = build_initial_state(load_run_config(write_config(data)))
    np.testing.assert_array_equal(state.v1.values, 0.5 * shape)
    np.testing.assert_array_equal(state.v2.values, -0.25 * shape)


def test_nodal_file_size_mismatch(write_config, small_run, tmp_path):
    (tmp_path / "nodal.json").write_text(json.dumps({"u0": [0.0, 0.1]}), encoding="utf-8")
    data = deep_merge(small_run, {"initial": {"nodal_file": "nodal.json"}})
    assert app.main(["simulate", "--config", write_config(data)]) == EXIT_CODES["config"]
