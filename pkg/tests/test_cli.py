"""End-to-end tests of the kehsim command line."""

import json

import pandas as pd
import pytest
from click.testing import CliRunner

from kehsim.cli import main
from kehsim.utils.config import load_config


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, overrides, *args):
    sets = [item for override in overrides for item in ("--set", override)]
    return runner.invoke(main, [*sets, *args])


class TestPower:
    def test_default_table(self, runner):
        result = runner.invoke(main, ["power"])
        assert result.exit_code == 0, result.output
        for value in ("13.11", "6.06", "28.15", "7.53", "75.89", "7.43", "73.26"):
            assert value in result.output

    def test_lower_sleep_floor(self, runner):
        result = runner.invoke(main, ["power", "--sleep-uw", "1.35"])
        assert result.exit_code == 0
        assert "1.41" in result.output

    def test_custom_empty_payload(self, runner):
        result = runner.invoke(main, ["power", "--payload", "0", "--format", "csv"])
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert lines[0] == "quantity,scenario,value,unit"
        assert "tx energy (0 B),custom,7.24,uJ" in lines

    def test_table_file(self, runner, tmp_path):
        out = tmp_path / "power.csv"
        result = runner.invoke(main, ["power", "--out", str(out)])
        assert result.exit_code == 0
        table = pd.read_csv(out)
        saving = table[table["quantity"] == "system saving"]["value"].iloc[0]
        assert saving == pytest.approx(73.26)

    def test_invalid_option(self, runner):
        result = runner.invoke(main, ["power", "--rate", "-1"])
        assert result.exit_code == 2


class TestErrors:
    def test_failing_linearity_check_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["--set", "capacitor.v_rating=5", "simulate", "--out", str(tmp_path / "sim")]
        )
        assert result.exit_code == 2
        assert "10.18" in result.output
        assert not (tmp_path / "sim").exists()

    def test_unknown_key_exits_2(self, runner):
        result = runner.invoke(main, ["--set", "sampler.tc=3", "power"])
        assert result.exit_code == 2
        assert "did you mean sampler.t_c" in result.output

    def test_missing_trace_exits_1(self, runner, tmp_path):
        result = runner.invoke(
            main, ["sample", str(tmp_path / "none.csv"), "--out", str(tmp_path / "s.csv")]
        )
        assert result.exit_code == 1
        assert "Error:" in result.output

    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "kehsim" in result.output


class TestStages:
    def test_simulate_is_deterministic(self, runner, tmp_path, small_overrides):
        for name in ("a", "b"):
            result = invoke(runner, small_overrides, "simulate", "--out", str(tmp_path / name))
            assert result.exit_code == 0, result.output
        files = sorted(p.name for p in (tmp_path / "a" / "traces").iterdir())
        assert files == ["S01_front.csv", "S01_rear.csv"]
        for name in files:
            a = (tmp_path / "a" / "traces" / name).read_bytes()
            assert a == (tmp_path / "b" / "traces" / name).read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 7
        assert manifest["stride"] == 10

    def test_sample_features_classify_chain(self, runner, tmp_path, small_overrides):
        sim = tmp_path / "sim"
        assert invoke(runner, small_overrides, "simulate", "--out", str(sim)).exit_code == 0

        samples = tmp_path / "samples.csv"
        result = invoke(
            runner, small_overrides,
            "sample", str(sim / "traces" / "S01_rear.csv"), "--out", str(samples),
        )
        assert result.exit_code == 0, result.output
        assert len(pd.read_csv(samples)) == 181

        features = tmp_path / "features"
        result = invoke(runner, small_overrides, "features", str(sim), "--out", str(features))
        assert result.exit_code == 0, result.output
        table = pd.read_csv(features / "S01.csv")
        assert set(table["label"]) == {"WALK", "RUN", "SU", "SD", "ST"}
        assert (table["r_rear_vps"] >= 0).all()

        out = tmp_path / "classify"
        result = invoke(
            runner, small_overrides, "classify", str(features / "S01.csv"), "--out", str(out)
        )
        assert result.exit_code == 0, result.output
        aggregate = pd.read_csv(out / "aggregate.csv")
        assert list(aggregate["feature_mask"]) == ["front", "rear", "fused"]
        assert (out / "reports" / "knn" / "fused" / "S01.json").exists()
        assert (out / "reports" / "knn" / "fused" / "aggregate_confusion.csv").exists()

    def test_features_from_sample_files_match_trace_features(
        self, runner, tmp_path, small_overrides
    ):
        sim = tmp_path / "sim"
        assert invoke(runner, small_overrides, "simulate", "--out", str(sim)).exit_code == 0
        samples = tmp_path / "samples"
        for position in ("front", "rear"):
            result = invoke(
                runner, small_overrides, "sample", str(sim / "traces" / f"S01_{position}.csv"),
                "--t-c", "2", "--out", str(samples / f"S01_{position}.csv"),
            )
            assert result.exit_code == 0, result.output

        from_samples = tmp_path / "from_samples"
        result = invoke(
            runner, small_overrides,
            "features", str(samples), "--from-samples", "--out", str(from_samples),
        )
        assert result.exit_code == 0, result.output
        from_traces = tmp_path / "from_traces"
        result = invoke(
            runner, small_overrides, "features", str(sim), "--t-c", "2", "--out", str(from_traces)
        )
        assert result.exit_code == 0, result.output
        a = pd.read_csv(from_samples / "S01.csv")
        b = pd.read_csv(from_traces / "S01.csv")
        assert list(a["label"]) == list(b["label"])
        pd.testing.assert_frame_equal(a, b, check_exact=False, atol=1e-6)

        result = invoke(
            runner, small_overrides,
            "features", str(samples), "--from-samples", "--t-c", "2", "--out", str(from_samples),
        )
        assert result.exit_code == 2

    def test_classify_without_files(self, runner, tmp_path):
        result = runner.invoke(main, ["classify", "--out", str(tmp_path / "c")])
        assert result.exit_code == 2


class TestPipeline:
    def test_sweep_outputs(self, runner, tmp_path, small_overrides):
        out = tmp_path / "run"
        result = invoke(runner, small_overrides, "pipeline", "--out", str(out))
        assert result.exit_code == 0, result.output
        aggregate = pd.read_csv(out / "aggregate.csv")
        assert len(aggregate) == 2 * 3
        assert sorted(set(aggregate["t_c"])) == [2.0, 5.0]
        assert aggregate["accuracy_mean"].between(0, 100).all()
        separation = pd.read_csv(out / "separation.csv")
        assert list(separation["t_c"]) == [2.0, 5.0]
        assert (out / "features" / "tc5" / "S01.csv").exists()
        assert (out / "reports" / "tc2" / "knn" / "rear" / "aggregate.json").exists()
        assert not (tmp_path / "run.partial").exists()
        assert (aggregate["skipped"] == 0).all()
        saved = load_config(out / "config.yaml")
        assert saved.manifest() == load_config(overrides=small_overrides).manifest()

    def test_refuses_to_overwrite(self, runner, tmp_path, small_overrides):
        out = tmp_path / "run"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        result = invoke(runner, small_overrides, "pipeline", "--out", str(out))
        assert result.exit_code == 2
        assert (out / "keep.txt").exists()

    def test_failure_leaves_no_partial_output(self, runner, tmp_path, small_overrides):
        out = tmp_path / "run"
        result = invoke(runner, [*small_overrides, "eval.folds=500"], "pipeline", "--out", str(out))
        assert result.exit_code == 1
        assert "instances" in result.output
        assert not out.exists()
        assert not (tmp_path / "run.partial").exists()
