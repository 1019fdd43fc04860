import json
from importlib import resources

import jsonschema
import pytest

from cpstream.cli import dispatch
from cpstream.rng import substream
from cpstream.timeseries import TimeSeries, save_csv

FAST = ["--grid", "300", "--reps", "2000"]


def schema(name):
    path = resources.files("cpstream") / "schemas" / f"{name}.schema.json"
    return json.loads(path.read_text())


def validate(record, name):
    jsonschema.validate(record, schema(name))


@pytest.fixture()
def run(capsys):
    def invoke(*argv, expect=0):
        status = dispatch(list(argv))
        captured = capsys.readouterr()
        assert status == expect, captured.err
        return captured.out

    return invoke


@pytest.fixture(scope="module")
def steps_csv(tmp_path_factory):
    # two 5-sigma level shifts at 100 and 200
    gen = substream(0, 40)
    x = gen.standard_normal(300)
    x[100:200] += 5.0
    path = tmp_path_factory.mktemp("fixtures") / "steps.csv"
    save_csv(TimeSeries(x), path)
    return str(path)


@pytest.fixture(scope="module")
def flat_csv(tmp_path_factory):
    gen = substream(1, 41)
    path = tmp_path_factory.mktemp("fixtures") / "flat.csv"
    save_csv(TimeSeries(gen.standard_normal(450)), path)
    return str(path)


@pytest.fixture(scope="module")
def one_step_csv(tmp_path_factory):
    gen = substream(2, 42)
    x = gen.standard_normal(400)
    x[150:] += 5.0
    path = tmp_path_factory.mktemp("fixtures") / "one_step.csv"
    save_csv(TimeSeries(x), path)
    return str(path)


class TestCritvalCommand:
    def test_deterministic_output(self, run):
        argv = ["critval", "--kind", "offline", "--d", "1", "--alpha", "0.05", "--seed", "7", *FAST]
        first = run(*argv)
        second = run(*argv)
        assert first == second
        record = json.loads(first)
        validate(record, "critval")
        assert record["kind"] == "offline-max"
        assert 1.0 < record["value"] < 3.0

    def test_ratio_kind(self, run):
        out = run(
            "critval", "--kind", "ratio", "--d", "1", "--alpha", "0.05",
            "--gamma", "0.25", "--horizon", "5", "--grid", "150", "--reps", "1500",
        )
        record = json.loads(out)
        validate(record, "critval")
        assert record["gamma"] == 0.25

    def test_build_table(self, run, tmp_path):
        table = tmp_path / "table.csv"
        out = run(
            "critval", "--build-table", str(table), "--grid", "150", "--reps", "1000",
        )
        lines = [json.loads(line) for line in out.strip().splitlines()]
        # 3 alphas x (offline: 3 dims + online kinds: 3 dims x 4 gammas each)
        assert len(lines) == 3 * (3 + 2 * 3 * 4)
        for record in lines:
            validate(record, "critval")
        assert table.exists()


class TestOfflineCommand:
    def test_multivariate_columns(self, run, tmp_path):
        gen = substream(3, 43)
        values = gen.standard_normal((200, 2))
        values[120:, 1] += 5.0
        path = tmp_path / "two.csv"
        save_csv(TimeSeries(values), path)
        out = run(
            "offline", "--input", str(path), "--columns", "2,3", "--alpha", "0.05", *FAST
        )
        record = json.loads(out)
        validate(record, "offline")
        assert record["reject"] is True
        assert record["params"]["d"] == 2
        assert abs(record["cps"][0] - 120) <= 5

    def test_detects_single_step(self, run, one_step_csv):
        out = run("offline", "--input", one_step_csv, "--alpha", "0.05", *FAST)
        record = json.loads(out)
        validate(record, "offline")
        assert record["reject"] is True
        assert len(record["cps"]) == 1
        assert abs(record["cps"][0] - 150) <= 5

    def test_quiet_series(self, run, flat_csv):
        record = json.loads(run("offline", "--input", flat_csv, "--alpha", "0.05", *FAST))
        validate(record, "offline")
        assert record["cps"] == []
        assert record["cp_fraction"] is None


class TestSegmentCommand:
    def test_two_changepoints_found(self, run, steps_csv):
        out = run("segment", "--input", steps_csv, "--alpha", "0.05", *FAST)
        record = json.loads(out)
        validate(record, "segment")
        assert len(record["cps"]) == 2
        assert abs(record["cps"][0] - 100) <= 10
        assert abs(record["cps"][1] - 200) <= 10
        assert record["params"]["alpha"] == 0.05

    def test_deterministic_bytes(self, run, steps_csv):
        argv = ["segment", "--input", steps_csv, "--alpha", "0.05", *FAST]
        assert run(*argv) == run(*argv)


class TestTrendCommand:
    def test_interval_verdict(self, run, one_step_csv):
        out = run("trend", "--input", one_step_csv, "--at", "151", "--mode", "interval")
        record = json.loads(out)
        validate(record, "trend")
        assert record["direction"] == "up"
        assert record["mode"] == "interval"

    def test_point_verdict(self, run, one_step_csv):
        record = json.loads(run("trend", "--input", one_step_csv, "--at", "155", "--mode", "point"))
        validate(record, "trend")
        assert record["mode"] == "point"


class TestMonitorCommand:
    def test_quiet_stream_no_events(self, run, flat_csv):
        out = run(
            "monitor", "--input", flat_csv, "--detector", "standard", "--alpha", "0.05",
            "--gamma", "0", "--m", "100", "--window", "100", *FAST,
        )
        lines = [json.loads(line) for line in out.strip().splitlines()]
        for line in lines:
            validate(line, "monitor-line")
        assert lines[0]["type"] == "config"
        assert all(line["type"] != "event" for line in lines[1:])

    def test_step_stream_emits_event(self, run, one_step_csv, tmp_path):
        flag = tmp_path / "hook-ran"
        out = run(
            "monitor", "--input", one_step_csv, "--m", "100", "--window", "100",
            "--on-scale-up", f"touch {flag}", *FAST,
        )
        lines = [json.loads(line) for line in out.strip().splitlines()]
        for line in lines:
            validate(line, "monitor-line")
        events = [line for line in lines if line["type"] == "event"]
        assert len(events) == 1
        assert events[0]["action"] == "scale-up"
        assert events[0]["index"] >= 151
        assert events[0]["training"] == [1, 100]
        assert flag.exists()

    def test_stdin_streaming(self, flat_csv, capsys, monkeypatch):
        import io

        monkeypatch.setattr("sys.stdin", io.StringIO(open(flat_csv).read()))
        status = dispatch(["monitor", "--input", "-", "--m", "100", "--window", "100", *FAST])
        assert status == 0
        out = capsys.readouterr().out
        assert json.loads(out.splitlines()[0])["type"] == "config"

    def test_config_file_precedence(self, run, flat_csv, tmp_path):
        cfg = tmp_path / "monitor.cfg"
        cfg.write_text("m = 120\nwindow = 100\nalpha = 0.1\n")
        out = run(
            "monitor", "--input", flat_csv, "--config", str(cfg), "--alpha", "0.05", *FAST,
        )
        params = json.loads(out.splitlines()[0])["params"]
        assert params["m"] == 120  # from config file
        assert params["alpha"] == 0.05  # flag wins
        assert params["window"] == 100

    def test_unknown_config_key_rejected(self, run, flat_csv, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus = 1\n")
        run("monitor", "--input", flat_csv, "--config", str(cfg), expect=1)


class TestSimulateCommand:
    def test_small_experiment(self, run, tmp_path):
        heatmap = tmp_path / "heat.csv"
        out = run(
            "simulate", "--grid", "6x6", "--attackers", "2", "--seed", "3",
            "--mode", "per-node", "--reps", "2", "--m", "150", "--block", "50",
            "--start", "301", "--horizon", "450",
            "--mc-grid", "300", "--mc-reps", "2000", "--heatmap", str(heatmap),
        )
        record = json.loads(out)
        validate(record, "simulate")
        assert record["grid"] == [6, 6]
        assert len(record["attackers"]) == 2
        assert len(record["detection_probability"]) == 36
        assert record["attacker_adjacent_detection"] >= 0.5
        rows = heatmap.read_text().strip().splitlines()
        assert len(rows) == 6
        assert all(len(row.split(",")) == 6 for row in rows)

    def test_cluster_mode(self, run):
        out = run(
            "simulate", "--grid", "4x4", "--attackers", "1", "--seed", "1",
            "--mode", "cluster", "--reps", "1", "--m", "150", "--block", "50",
            "--start", "301", "--horizon", "450", "--cluster-block", "2",
            "--mc-grid", "300", "--mc-reps", "2000",
        )
        record = json.loads(out)
        validate(record, "simulate")
        assert record["mode"] == "cluster"
        assert record["cluster_detection_probability"] is not None
        assert record["sample_messages"] > 0

    def test_bad_grid_spec(self, run):
        run("simulate", "--grid", "10by10", expect=1)


class TestExitCodes:
    def test_usage_error_is_2(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            dispatch(["segment", "--no-such-flag"])
        assert excinfo.value.code == 2

    def test_help_exits_zero_and_lists_flags(self, capsys):
        for command, flags in {
            "critval": ["--kind", "--d", "--alpha", "--seed"],
            "offline": ["--input", "--alpha"],
            "segment": ["--input", "--alpha", "--min-seg"],
            "trend": ["--input", "--at"],
            "monitor": ["--detector", "--gamma", "--alpha", "--m", "--window", "--config", "--seed"],
            "simulate": ["--grid", "--attackers", "--seed", "--mode", "--reps"],
        }.items():
            with pytest.raises(SystemExit) as excinfo:
                dispatch([command, "--help"])
            assert excinfo.value.code == 0
            help_text = capsys.readouterr().out
            for flag in flags:
                assert flag in help_text

    def test_missing_input_is_domain_error(self, run):
        run("offline", "--input", "/nonexistent.csv", expect=1)
        run("offline", expect=1)

    def test_bad_column_is_domain_error(self, run, flat_csv):
        run("offline", "--input", flat_csv, "--columns", "9", expect=1)

    def test_output_file(self, run, flat_csv, tmp_path):
        out_path = tmp_path / "report.json"
        stdout = run(
            "offline", "--input", flat_csv, "--alpha", "0.05", *FAST, "--out", str(out_path),
        )
        assert stdout == ""
        validate(json.loads(out_path.read_text()), "offline")
