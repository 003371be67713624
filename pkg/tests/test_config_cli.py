import json

import numpy as np
import pytest

from timesup.cli import main
from timesup.config import ConfigError, load_config, parse_config, serialize_config
from timesup.weights import read_tsupw1, write_tsupw1


class TestConfig:
    def test_defaults_and_overrides(self):
        config = parse_config("model.d = 32\ntrain.lr = 5e-4\n# comment\n")
        assert config["model.d"] == 32
        assert config["train.lr"] == 5e-4
        assert config["model.layers"] == 3  # default

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("model.depth = 3\n")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("model.d = 8\nmodel.layers = many\n")

    def test_round_trip_idempotent(self):
        config = parse_config("model.d = 16\nmodel.enhancer = off\nseed = 7\n")
        text = serialize_config(config)
        assert serialize_config(parse_config(text)) == text
        assert parse_config(text).values == config.values

    def test_pretrained_requires_weights(self):
        with pytest.raises(ConfigError, match="model.weights"):
            parse_config("component.ln.init = pretrained\n")

    def test_real_data_requires_path(self):
        with pytest.raises(ConfigError, match="data.path"):
            parse_config("data.synthetic = false\n")

    def test_model_config_construction(self):
        config = parse_config(
            "model.enhancer = off\nwindow.input_len = 64\nwindow.patch = 16\n"
            "window.stride = 8\n")
        mcfg = config.model_config()
        assert not mcfg.enhancer
        assert mcfg.n_patches == 7
        assert config.window_spec().n_patches == 7


def desk_config_text(**overrides):
    base = {
        "model.d": 16, "model.layers": 1, "model.heads": 2, "model.vocab": 24,
        "model.prototypes": 10, "model.top_k": 2, "model.compressed_tokens": 4,
        "model.dropout": 0.1, "model.horizon": 8, "data.channels": 2,
        "window.input_len": 24, "window.patch": 8, "window.stride": 4,
        "train.lr": 1e-3, "train.epochs": 2, "train.batch": 16,
        "train.patience": 2, "seed": 2021,
    }
    base.update(overrides)
    return "\n".join(f"{k} = {v}" for k, v in base.items()) + "\n"


@pytest.fixture
def desk_config_path(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(desk_config_text())
    return path


class TestTheorem1Command:
    def test_noiseless_exact_match(self, tmp_path):
        code = main(["theorem1", "--m", "16", "--n", "16", "--sigma-ts", "0",
                     "--sigma-l", "0", "--trials", "200", "--seed", "1",
                     "--out", str(tmp_path)])
        assert code == 0
        summary = json.loads((tmp_path / "theorem1.json").read_text())
        assert summary["mc_mean"] == summary["closed_form"] == 1.0
        assert summary["mc_stderr"] == 0.0

    def test_hand_derived_half_case(self, tmp_path):
        code = main(["theorem1", "--m", "100", "--n", "100", "--sigma-ts", "0.1",
                     "--sigma-l", "0.1", "--trials", "20000", "--seed", "2021",
                     "--out", str(tmp_path)])
        assert code == 0
        summary = json.loads((tmp_path / "theorem1.json").read_text())
        assert summary["closed_form"] == pytest.approx(0.5, abs=1e-12)
        csv = (tmp_path / "concentration.csv").read_text().strip().split("\n")
        assert csv[0] == "m,mean,std,rel_fluct"
        assert len(csv) == 5

    def test_too_few_trials_is_usage_error(self, tmp_path):
        code = main(["theorem1", "--trials", "50", "--out", str(tmp_path)])
        assert code == 2


class TestPcaProbeCommand:
    def test_missing_config_exit_2(self, tmp_path):
        code = main(["pca-probe", "--config", str(tmp_path / "nope.conf"),
                     "--out", str(tmp_path / "out.json")])
        assert code == 2

    def test_rank_two_fixture(self, tmp_path):
        # pure sine, window = 6 full periods: raw patch tokens span sin/cos only
        t = np.arange(1100.0)
        rows = ["date,ch0"] + [
            f"2020-01-{1 + i // 24:02d} {i % 24:02d}:00:00,{np.sin(2 * np.pi * x / 16):.12f}"
            for i, x in enumerate(t)
        ]
        csv = tmp_path / "sine.csv"
        csv.write_text("\n".join(rows) + "\n")
        conf = tmp_path / "probe.conf"
        conf.write_text(desk_config_text(**{
            "data.synthetic": "false", "data.path": str(csv),
            "data.channels": 1, "window.input_len": 96, "window.patch": 16,
            "window.stride": 8, "model.horizon": 8}))
        out = tmp_path / "evr.json"
        code = main(["pca-probe", "--config", str(conf), "--split", "train",
                     "--stage", "raw", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["intrinsic_dim"] == 2

    def test_fused_stage_runs(self, desk_config_path, tmp_path):
        out = tmp_path / "evr.json"
        code = main(["pca-probe", "--config", str(desk_config_path),
                     "--stage", "fused", "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["intrinsic_dim"] >= 1

    def test_raw_vs_fused_at_desk_defaults(self, tmp_path):
        conf = tmp_path / "desk.conf"
        conf.write_text("")  # all defaults = desk configuration
        dims = {}
        for stage in ("raw", "fused"):
            out = tmp_path / f"{stage}.json"
            assert main(["pca-probe", "--config", str(conf), "--stage", stage,
                         "--out", str(out)]) == 0
            dims[stage] = json.loads(out.read_text())["intrinsic_dim"]
        assert dims["fused"] >= 2 * dims["raw"]


class TestDiagnoseCommand:
    def test_writes_reports(self, desk_config_path, tmp_path):
        out = tmp_path / "diag"
        code = main(["diagnose", "--config", str(desk_config_path),
                     "--out-dir", str(out)])
        assert code == 0
        cone = json.loads((out / "cone_report.json").read_text())
        align = json.loads((out / "alignment.json").read_text())
        assert len(cone["layers"]) == len(align["layers"]) == 2  # 1 layer + input
        assert (out / "embeddings.csv").exists()

    def test_unwritable_dir_exit_1(self, desk_config_path):
        code = main(["diagnose", "--config", str(desk_config_path),
                     "--out-dir", "/proc/definitely/not/writable"])
        assert code == 1


class TestTrainForecastCommands:
    def test_train_writes_history_and_weights(self, desk_config_path, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--config", str(desk_config_path),
                     "--out-dir", str(out)])
        assert code == 0
        lines = (out / "history.jsonl").read_text().strip().split("\n")
        records = [json.loads(l) for l in lines]
        assert {"epoch", "train_mse", "val_mse", "val_mae", "seconds"} <= set(records[0])
        tensors = read_tsupw1(out / "model.tsupw")
        assert "head.w_h" in tensors and "wte" in tensors

    def test_forecast_with_trained_weights(self, desk_config_path, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(desk_config_path),
                     "--out-dir", str(out)]) == 0
        pred = tmp_path / "pred.csv"
        code = main(["forecast", "--config", str(desk_config_path),
                     "--weights", str(out / "model.tsupw"), "--out", str(pred)])
        assert code == 0
        lines = pred.read_text().strip().split("\n")
        assert lines[0] == "window,channel,step,yhat,y"
        assert len(lines) > 1

    def test_forecast_requires_weights_or_baseline(self, desk_config_path, tmp_path):
        code = main(["forecast", "--config", str(desk_config_path),
                     "--out", str(tmp_path / "p.csv")])
        assert code == 2

    def test_persistence_on_constant_series_zero_error(self, tmp_path):
        rows = ["date,ch0"] + [f"2020-01-01 {i:02d}:{j:02d}:00,4.5"
                               for i in range(7) for j in range(60)]
        csv = tmp_path / "const.csv"
        csv.write_text("\n".join(rows) + "\n")
        conf = tmp_path / "c.conf"
        conf.write_text(desk_config_text(**{
            "data.synthetic": "false", "data.path": str(csv), "data.channels": 1}))
        pred = tmp_path / "pred.csv"
        code = main(["forecast", "--config", str(conf), "--baseline",
                     "persistence", "--out", str(pred)])
        assert code == 0
        for line in pred.read_text().strip().split("\n")[1:]:
            _, _, _, yhat, y = line.split(",")
            assert float(yhat) == float(y)


class TestDeterminism:
    def strip_seconds(self, text):
        return [
            {k: v for k, v in json.loads(line).items() if k != "seconds"}
            for line in text.strip().split("\n")
        ]

    def test_train_twice_bit_identical(self, desk_config_path, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["train", "--config", str(desk_config_path),
                     "--out-dir", str(out1)]) == 0
        assert main(["train", "--config", str(desk_config_path),
                     "--out-dir", str(out2)]) == 0
        assert (out1 / "model.tsupw").read_bytes() == (out2 / "model.tsupw").read_bytes()
        h1 = self.strip_seconds((out1 / "history.jsonl").read_text())
        h2 = self.strip_seconds((out2 / "history.jsonl").read_text())
        assert h1 == h2

    def test_diagnose_twice_bit_identical(self, desk_config_path, tmp_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        for out in (out1, out2):
            assert main(["diagnose", "--config", str(desk_config_path),
                         "--out-dir", str(out)]) == 0
        for name in ("cone_report.json", "alignment.json", "embeddings.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_theorem1_twice_bit_identical(self, tmp_path):
        out1, out2 = tmp_path / "t1", tmp_path / "t2"
        for out in (out1, out2):
            assert main(["theorem1", "--m", "32", "--n", "32", "--trials", "2000",
                         "--seed", "5", "--out", str(out)]) == 0
        assert (out1 / "theorem1.json").read_bytes() == (out2 / "theorem1.json").read_bytes()
        assert (out1 / "concentration.csv").read_bytes() == \
            (out2 / "concentration.csv").read_bytes()


class TestAblateCommand:
    def test_without_weights_runs_four_cells(self, tmp_path):
        conf = tmp_path / "a.conf"
        conf.write_text(desk_config_text(**{"train.epochs": 1}))
        out = tmp_path / "cells.csv"
        code = main(["ablate", "--config", str(conf), "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "ln,mha,status,val_mse,val_mae,frozen_ok"
        cells = [l.split(",") for l in lines[1:]]
        assert len(cells) == 16
        ran = [c for c in cells if c[2] == "run"]
        skipped = [c for c in cells if c[2] == "skipped"]
        assert len(ran) == 4 and len(skipped) == 12
        assert all(c[0][0] == "R" and c[1][0] == "R" for c in ran)
        assert all(c[5] == "true" for c in ran)

    def test_with_fixture_weights_runs_all_cells(self, tmp_path):
        from timesup.model import init_model
        from timesup.rng import Rng
        conf0 = tmp_path / "seed.conf"
        conf0.write_text(desk_config_text())
        base = load_config(conf0)
        donor = init_model(base.model_config(), Rng(99))
        weights = tmp_path / "fixture.tsupw"
        write_tsupw1(weights, {n: p.value for n, p in donor.items()})
        conf = tmp_path / "a.conf"
        conf.write_text(desk_config_text(**{
            "train.epochs": 1, "model.weights": str(weights)}))
        out = tmp_path / "cells.csv"
        assert main(["ablate", "--config", str(conf), "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")[1:]
        cells = [l.split(",") for l in lines]
        assert len(cells) == 16
        assert all(c[2] == "run" for c in cells)
        assert all(c[5] == "true" for c in cells)
