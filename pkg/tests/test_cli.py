import json

import pytest

from ngrc_control.cli import main, parse_header, render_command, resolve_config


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


SMALL_SWEEP = [
    "--k", "0,0.6", "--sigma-d", "0.001", "--trials", "2", "--threads", "1",
]


class TestTrain:
    def test_writes_model_and_report(self, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        code, out, err = run_cli(
            ["train", "--seed", "1", "--out", str(model_path)], capsys
        )
        assert code == 0, err
        obj = json.loads(model_path.read_text())
        assert set(obj) == {"alpha", "w_u", "w_x", "config"}
        assert out.startswith("# command: train\n# config: ")
        assert "test_rmse" in out and "feature  weight" in out

    def test_weight_table_recovers_map(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["train", "--seed", "1", "--out", str(tmp_path / "m.json")], capsys
        )
        assert code == 0
        table = {}
        for line in out.splitlines():
            parts = line.split()
            if len(parts) == 2 and parts[0] in {"u", "c", "x", "y", "x^2", "x*y", "y^2"}:
                table[parts[0]] = float(parts[1])
        expected = {"u": 1.0, "c": 1.0, "x": 0.0, "y": 1.0, "x^2": -1.4, "x*y": 0.0, "y^2": 0.0}
        for name, value in expected.items():
            assert abs(table[name] - value) < 1e-6, name

    def test_noisy_training_reports_noise_level_rmse(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["train", "--seed", "1", "--sigma-d", "1e-2", "--out", str(tmp_path / "m.json")],
            capsys,
        )
        assert code == 0
        reported = next(
            float(l.split("=")[1]) for l in out.splitlines() if l.startswith("test_rmse")
        )
        assert 0.5e-2 <= reported <= 2e-2

    def test_same_seed_byte_identical(self, tmp_path, capsys):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        _, out1, _ = run_cli(["train", "--seed", "9", "--out", str(p1)], capsys)
        _, out2, _ = run_cli(["train", "--seed", "9", "--out", str(p2)], capsys)
        assert out1 == out2
        assert p1.read_bytes() == p2.read_bytes()

    def test_requires_out(self, capsys):
        code, _, err = run_cli(["train", "--seed", "1"], capsys)
        assert code == 1 and "error:" in err


class TestControlTrace:
    def test_deadbeat_first_row(self, tmp_path, capsys):
        out_path = tmp_path / "trace.csv"
        code, _, err = run_cli(
            ["control-trace", "--task", "pu1-pu2", "--k", "0", "--seed", "2",
             "--out", str(out_path)],
            capsys,
        )
        assert code == 0, err
        rows = [l for l in out_path.read_text().splitlines() if not l.startswith("#")]
        cells = rows[2].split(",")  # header + row0 + row1
        e, x_des = float(cells[5]), float(cells[4])
        assert abs(e) / abs(x_des) < 1e-10

    def test_period4_from_given_start(self, tmp_path, capsys):
        out_path = tmp_path / "trace.csv"
        code, _, err = run_cli(
            ["control-trace", "--task", "period4", "--k", "0", "--x0", "-1",
             "--y0", "0", "--seed", "2", "--out", str(out_path)],
            capsys,
        )
        assert code == 0, err
        rows = [l for l in out_path.read_text().splitlines() if not l.startswith("#")]
        first = rows[1].split(",")
        assert float(first[1]) == -1.0 and float(first[2]) == 0.0
        second = rows[2].split(",")
        assert abs(float(second[5])) / abs(float(second[4])) < 1e-9

    def test_rejects_multiple_k(self, capsys):
        code, _, err = run_cli(["control-trace", "--k", "0,0.3"], capsys)
        assert code == 1 and "single" in err


class TestSweepK:
    def test_noiseless_small_gains_track_tightly(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        code, _, err = run_cli(
            ["sweep-k", "--sigma-d", "0", "--k", "0,0.3,0.6", "--trials", "2",
             "--seed", "4", "--threads", "1", "--out", str(out_path)],
            capsys,
        )
        assert code == 0, err
        for line in out_path.read_text().splitlines():
            if line.startswith("#") or line.startswith("sweep,"):
                continue
            cells = line.split(",")
            assert abs(float(cells[1])) <= 0.6
            assert float(cells[4]) <= 1e-10, line

    def test_modelerror_command_ties_sigmas(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        code, _, err = run_cli(
            ["sweep-k-modelerror"] + SMALL_SWEEP + ["--seed", "5", "--out", str(out_path)],
            capsys,
        )
        assert code == 0, err
        for line in out_path.read_text().splitlines():
            if line.startswith("#") or line.startswith("sweep,"):
                continue
            cells = line.split(",")
            assert cells[0] == "sweep-k-modelerror"
            assert float(cells[2]) == float(cells[3]) == 1e-3


class TestPredictSweep:
    def test_small_run(self, tmp_path, capsys):
        out_path = tmp_path / "pred.csv"
        code, _, err = run_cli(
            ["predict-sweep", "--m-train-grid", "10", "--sigma-d", "1e-3",
             "--trials", "2", "--seed", "6", "--threads", "1", "--out", str(out_path)],
            capsys,
        )
        assert code == 0, err
        lines = [l for l in out_path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0].startswith("sweep,cell_param")
        assert len(lines) == 3


class TestConfigHandling:
    def test_unknown_flag_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus", "1"])
        assert exc.value.code != 0

    def test_unknown_command_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code != 0

    def test_config_file_layering(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"sigma_d": 0.01, "seed": 123}))
        out_path = tmp_path / "t.csv"
        code, _, err = run_cli(
            ["control-trace", "--config", str(cfg_path), "--n-iters", "2",
             "--out", str(out_path)],
            capsys,
        )
        assert code == 0, err
        _, cfg = parse_header(out_path.read_text())
        assert cfg["sigma_d"] == 0.01  # from file
        assert cfg["seed"] == 123  # from file
        assert cfg["n_iters"] == 2  # flag wins

    def test_flag_overrides_config_file(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"sigma_d": 0.01}))
        out_path = tmp_path / "t.csv"
        code, _, _ = run_cli(
            ["control-trace", "--config", str(cfg_path), "--sigma-d", "0.001",
             "--n-iters", "2", "--out", str(out_path)],
            capsys,
        )
        assert code == 0
        _, cfg = parse_header(out_path.read_text())
        assert cfg["sigma_d"] == 0.001

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"sigma_z": 1}))
        code, _, err = run_cli(
            ["control-trace", "--config", str(cfg_path)], capsys
        )
        assert code == 1 and "unknown config keys" in err

    @pytest.mark.parametrize(
        "argv",
        [
            ["train", "--task", "period4"],
            ["train", "--k", "0.3"],
            ["predict-sweep", "--x0", "0.5"],
            ["sweep-k", "--m-train-grid", "5,10"],
            ["sweep-k", "--sigma-dw", "0.1"],
        ],
    )
    def test_inapplicable_flag_rejected(self, argv, capsys):
        code, _, err = run_cli(argv, capsys)
        assert code == 1 and "does not accept" in err


class TestHeaderReplay:
    @pytest.mark.parametrize(
        "argv",
        [
            ["control-trace", "--task", "arbitrary", "--k", "0.3", "--seed", "11",
             "--n-iters", "10"],
            ["sweep-k", "--k", "0,0.3", "--sigma-d", "1e-3", "--trials", "2",
             "--seed", "12", "--threads", "1"],
            ["predict-sweep", "--m-train-grid", "10", "--sigma-d", "1e-2",
             "--trials", "2", "--seed", "13", "--threads", "1"],
        ],
    )
    def test_rerun_from_header_is_byte_identical(self, argv, tmp_path, capsys):
        out_path = tmp_path / "artifact.csv"
        code, _, err = run_cli(argv + ["--out", str(out_path)], capsys)
        assert code == 0, err
        text = out_path.read_text()
        command, cfg = parse_header(text)
        assert render_command(command, cfg, threads=1) == text

    def test_train_report_replays_from_header(self, tmp_path, capsys):
        code, report, _ = run_cli(
            ["train", "--seed", "21", "--out", str(tmp_path / "m.json")], capsys
        )
        assert code == 0
        command, cfg = parse_header(report)
        assert render_command(command, cfg) == report

    def test_resolved_config_round_trips_through_json(self):
        from ngrc_control.cli import build_parser

        args = build_parser().parse_args(["sweep-k", "--seed", "77"])
        cfg = resolve_config("sweep-k", args)
        assert json.loads(json.dumps(cfg)) == cfg
