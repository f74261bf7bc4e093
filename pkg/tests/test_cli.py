import csv
import hashlib
import shutil
from pathlib import Path

import numpy as np
import pytest

from relform.cli import main
from relform.errors import ConfigError
from relform.scenario import emit_document, load_document, load_scenario, normalize_document


def run_cli(*argv):
    return main(list(argv))


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture()
def small_scenario(tmp_path, scenario_dir):
    """Benchmark scenario shrunk for fast CLI exercises."""
    text = (scenario_dir / "paper.toml").read_text()
    text = text.replace("horizon = 3000", "horizon = 40")
    text = text.replace("runs = 50", "runs = 2")
    path = tmp_path / "small.toml"
    path.write_text(text)
    return path


class TestScenarioLoading:
    def test_paper_scenario_digest(self, scenario_dir):
        scenario, document, warnings = load_scenario(scenario_dir / "paper.toml")
        assert scenario.graph.num_nodes == 10
        assert len(scenario.graph.links) == 30
        assert scenario.dim == 2
        assert scenario.repeat == 10
        assert warnings == []

    def test_missing_graph_section(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[target]\npositions = [[0.0, 0.0]]\n")
        with pytest.raises(ConfigError, match=r"\[graph\]"):
            load_scenario(path)

    def test_unknown_key_rejected(self, tmp_path, scenario_dir):
        text = (scenario_dir / "k4_square.toml").read_text() + "\n[sim]\nbogus = 1\n"
        # TOML forbids duplicate tables; patch the existing one instead.
        text = (scenario_dir / "k4_square.toml").read_text().replace(
            "seed = 7", "seed = 7\nbogus = 1"
        )
        path = tmp_path / "bad.toml"
        path.write_text(text)
        with pytest.raises(ConfigError, match="sim.bogus"):
            load_scenario(path)

    def test_unknown_section_rejected(self, tmp_path, scenario_dir):
        text = (scenario_dir / "k4_square.toml").read_text() + "\n[mystery]\nx = 1\n"
        path = tmp_path / "bad.toml"
        path.write_text(text)
        with pytest.raises(ConfigError, match=r"\[mystery\]"):
            load_scenario(path)

    def test_dimension_cross_check(self, tmp_path, scenario_dir):
        text = (scenario_dir / "k4_square.toml").read_text().replace(
            "mode = \"solve\"", "mode = \"solve\""
        ).replace("[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]",
                  "[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]")
        path = tmp_path / "bad.toml"
        path.write_text(text)
        with pytest.raises(ConfigError, match="rows"):
            load_scenario(path)

    def test_override_parsing_and_typing(self, scenario_dir):
        scenario, document, _ = load_scenario(
            scenario_dir / "paper.toml",
            ["filter.estimator=rkf", "noise.sigma_v=0.25", "sim.runs=3"],
        )
        assert scenario.estimator == "rkf"
        assert scenario.sigma_v == 0.25
        assert scenario.runs == 3
        assert document["filter"]["estimator"] == "rkf"

    def test_bad_override_key(self, scenario_dir):
        with pytest.raises(ConfigError, match="unknown key"):
            load_scenario(scenario_dir / "paper.toml", ["filter.bogus=1"])

    def test_emit_round_trip(self, scenario_dir, tmp_path):
        doc = normalize_document(load_document(scenario_dir / "paper.toml"))
        text = emit_document(doc)
        path = tmp_path / "echo.toml"
        path.write_text(text)
        again = normalize_document(load_document(path))
        assert again == doc


class TestValidate:
    def test_paper_scenario_ok(self, scenario_dir, capsys):
        assert run_cli("validate", "--scenario", str(scenario_dir / "paper.toml")) == 0
        out = capsys.readouterr().out
        assert "nodes: 10" in out
        assert "directed edges: 60" in out
        assert "dimension: 2" in out

    def test_leader_size_warning(self, scenario_dir, capsys):
        code = run_cli(
            "validate",
            "--scenario", str(scenario_dir / "paper.toml"),
            "--set", "graph.leaders=[1, 2]",
        )
        assert code == 0
        assert "leader set has 2 nodes" in capsys.readouterr().out

    def test_bad_explicit_weights_surface_residual(self, tmp_path, scenario_dir, capsys):
        text = (scenario_dir / "k4_square.toml").read_text().replace(
            'mode = "solve"\nscale = 8.0',
            'mode = "explicit"\nvalues = [[1, 2, 1.0], [1, 3, 1.0], [1, 4, 1.0], '
            "[2, 3, 1.0], [2, 4, 1.0], [3, 4, 1.0]]",
        )
        path = tmp_path / "badweights.toml"
        path.write_text(text)
        code = run_cli("validate", "--scenario", str(path))
        assert code == 2
        assert "residual" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert run_cli("validate", "--scenario", "/nonexistent/s.toml") == 2


class TestRun:
    def test_run_writes_outputs(self, small_scenario, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            "run", "--scenario", str(small_scenario), "--out", str(out),
            "--set", "filter.estimator=rkf",
        )
        assert code == 0
        assert (out / "trace_rkf.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "scenario.resolved.toml").exists()
        with open(out / "trace_rkf.csv") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], rows[1:]
        assert header[:7] == [
            "run", "k", "estimator", "eps", "cov_trace", "affine_residual", "leader_residual"
        ]
        assert header[7] == "xhat_1_2_0"
        assert len(header) == 7 + 60 * 2
        assert len(data) == 2 * 40  # runs * horizon, run-major
        assert [r[0] for r in data[:40]] == ["0"] * 40
        assert data[0][2] == "rkf"

    def test_override_recorded_in_outputs(self, small_scenario, tmp_path):
        out = tmp_path / "out"
        run_cli(
            "run", "--scenario", str(small_scenario), "--out", str(out),
            "--set", "filter.estimator=jrkf",
        )
        resolved = (out / "scenario.resolved.toml").read_text()
        assert 'estimator = "jrkf"' in resolved
        summary = (out / "summary.csv").read_text()
        assert ",jrkf," in summary

    def test_trace_round_trip_exact(self, small_scenario, tmp_path):
        out = tmp_path / "out"
        run_cli("run", "--scenario", str(small_scenario), "--out", str(out))
        from relform import prepare, run_once
        from relform.scenario import load_scenario as load

        scenario, _, _ = load(small_scenario)
        trace = run_once(prepare(scenario), scenario.seed)
        with open(out / f"trace_{scenario.estimator}.csv") as fh:
            reader = csv.DictReader(fh)
            first = next(reader)
        assert float(first["eps"]) == trace.eps[0]
        assert float(first["cov_trace"]) == trace.cov_trace[0]
        assert float(first["xhat_1_2_0"]) == trace.estimates[0][0]

    def test_rerun_is_bit_identical(self, small_scenario, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_cli("run", "--scenario", str(small_scenario), "--out", str(out1))
        run_cli("run", "--scenario", str(small_scenario), "--out", str(out2))
        for name in ("trace_crkf.csv", "summary.csv", "scenario.resolved.toml"):
            assert file_digest(out1 / name) == file_digest(out2 / name), name

    def test_runtime_failure_exit_code(self, small_scenario, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli(
            "run", "--scenario", str(small_scenario), "--out", str(out),
            "--set", "noise.sigma_v=0.0", "--runs", "1",
        )
        assert code == 3
        err = capsys.readouterr().err
        assert "failed at step" in err
        # Partial outputs still exist for inspection.
        assert (out / "trace_crkf.csv").exists()

    def test_config_error_exit_code(self, small_scenario, tmp_path, capsys):
        code = run_cli(
            "run", "--scenario", str(small_scenario), "--out", str(tmp_path / "o"),
            "--set", "filter.estimator=kalmanator",
        )
        assert code == 2
        assert "estimator" in capsys.readouterr().err


class TestCompare:
    def test_identical_estimators_give_identical_columns(self, small_scenario, tmp_path):
        out = tmp_path / "cmp"
        code = run_cli(
            "compare", "--scenario", str(small_scenario), "--out", str(out),
            "--estimators", "rkf,rkf",
        )
        assert code == 0
        with open(out / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        assert header == [
            "k",
            "eps_mean_rkf", "eps_std_rkf", "cov_trace_rkf",
            "eps_mean_rkf", "eps_std_rkf", "cov_trace_rkf",
        ]
        for row in rows[1:]:
            assert row[1:4] == row[4:7]

    def test_steady_state_table(self, small_scenario, tmp_path):
        out = tmp_path / "cmp"
        code = run_cli(
            "compare", "--scenario", str(small_scenario), "--out", str(out),
            "--estimators", "mle,rkf,jrkf,crkf", "--set", "sim.horizon=200",
        )
        assert code == 0
        with open(out / "steady_state.csv") as fh:
            rows = list(csv.DictReader(fh))
        by_name = {r["estimator"]: r for r in rows}
        assert set(by_name) == {"mle", "rkf", "jrkf", "crkf"}
        assert all(int(r["runs_completed"]) == 2 for r in rows)
        assert (out / "trace_mle.csv").exists()
        assert (out / "trace_crkf.csv").exists()

    def test_single_estimator_rejected(self, small_scenario, tmp_path, capsys):
        code = run_cli(
            "compare", "--scenario", str(small_scenario), "--out", str(tmp_path / "x"),
            "--estimators", "rkf",
        )
        assert code == 2


class TestJrkfRkfEquivalenceThroughCli:
    def test_zero_process_noise_columns_match(self, small_scenario, tmp_path):
        out = tmp_path / "cmp"
        code = run_cli(
            "compare", "--scenario", str(small_scenario), "--out", str(out),
            "--estimators", "jrkf,rkf", "--set", "noise.sigma_w=0.0",
        )
        assert code == 0
        with open(out / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        for row in rows[1:]:
            jr = np.array([float(v) for v in row[1:4]])
            rk = np.array([float(v) for v in row[4:7]])
            assert np.allclose(jr, rk, atol=1e-9)
