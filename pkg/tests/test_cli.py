"""Exercise the command-line surface in process through cli.main."""

import json
import os

import numpy as np
import pytest

from pear.cli import main
from pear.stf import read_states, read_stf, write_stf
from pear.synthetic import gen_synthetic
from pear.grid import GridSpec


@pytest.fixture(autouse=True)
def no_ambient_seed(monkeypatch):
    monkeypatch.delenv("PEAR_SEED", raising=False)


@pytest.fixture
def data_n8(tmp_path):
    """A small n_side=8 sequence on disk, shared by train/eval tests."""
    path = tmp_path / "seq.stf"
    rc = main(["gen-data", "--out", str(path), "--nside", "8",
               "--steps", "3", "--seed", "7"])
    assert rc == 0
    return path


class TestGenData:
    def test_writes_loadable_sequence(self, tmp_path, capsys):
        out = tmp_path / "d.stf"
        rc = main(["gen-data", "--out", str(out), "--nside", "2",
                   "--steps", "4", "--seed", "7"])
        assert rc == 0
        assert "wrote 4 states" in capsys.readouterr().out
        states, days, header = read_states(out)
        assert len(states) == 4
        assert states[0].surface.shape == (48, 4)
        assert states[0].upper.shape == (48, 13, 5)
        assert list(days) == [1, 2, 3, 4]
        assert header["meta"]["kind"] == "synthetic"
        assert header["meta"]["seed"] == 7

    def test_seed_flag_changes_content(self, tmp_path):
        a, b, c = (tmp_path / n for n in ("a.stf", "b.stf", "c.stf"))
        for path, seed in ((a, "1"), (b, "2"), (c, "1")):
            main(["gen-data", "--out", str(path), "--nside", "2",
                  "--steps", "2", "--seed", seed])
        sa, _, _ = read_states(a)
        sb, _, _ = read_states(b)
        sc, _, _ = read_states(c)
        assert not np.array_equal(sa[0].surface, sb[0].surface)
        np.testing.assert_array_equal(sa[0].surface, sc[0].surface)

    def test_env_seed_overrides_flag(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PEAR_SEED", "3")
        out = tmp_path / "env.stf"
        main(["gen-data", "--out", str(out), "--nside", "2",
              "--steps", "2", "--seed", "9"])
        states, _, header = read_states(out)
        assert header["meta"]["seed"] == 3
        expect, _ = gen_synthetic(3, GridSpec.from_nside(2), 2)
        np.testing.assert_array_equal(states[0].surface, expect[0].surface)

    def test_start_day_carries_through(self, tmp_path):
        out = tmp_path / "d.stf"
        main(["gen-data", "--out", str(out), "--nside", "2", "--steps", "3",
              "--start-day", "100"])
        _, days, _ = read_states(out)
        assert list(days) == [100, 101, 102]

    def test_year_length_wraps_days(self, tmp_path):
        out = tmp_path / "d.stf"
        main(["gen-data", "--out", str(out), "--nside", "2", "--steps", "7",
              "--year-length", "3"])
        _, days, header = read_states(out)
        assert list(days) == [1, 2, 3, 1, 2, 3, 1]
        assert header["meta"]["year_length"] == 3


class TestResample:
    def test_constant_field_survives(self, tmp_path, capsys):
        src = tmp_path / "latlon.stf"
        write_stf(src, {"values": np.full((7, 12, 2), 1.5, dtype=np.float32)})
        out = tmp_path / "hpx.stf"
        with pytest.warns(UserWarning, match="coarser"):
            rc = main(["resample", "--in", str(src), "--nside", "2",
                       "--out", str(out)])
        assert rc == 0
        assert "7x12 -> 48 pixels" in capsys.readouterr().out
        arrays, header = read_stf(out)
        assert arrays["field"].shape == (48, 2)
        np.testing.assert_allclose(arrays["field"], 1.5, rtol=1e-6)
        assert header["meta"]["n_side"] == 2
        assert header["meta"]["ordering"] == "nested"

    def test_rejects_wrong_payload(self, tmp_path):
        src = tmp_path / "bad.stf"
        write_stf(src, {"other": np.zeros((3, 4, 1), dtype=np.float32)})
        with pytest.raises(SystemExit):
            main(["resample", "--in", str(src), "--nside", "2",
                  "--out", str(tmp_path / "x.stf")])


class TestProject:
    def test_pgm_raster_from_sequence(self, tmp_path, data_n8):
        out = tmp_path / "t2m.pgm"
        rc = main(["project", "--in", str(data_n8), "--var", "t2m",
                   "--nlat", "31", "--nlon", "60", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "60 31"
        assert lines[2] == "255"
        assert len(lines) == 3 + 31
        values = [int(v) for v in lines[3].split()]
        assert len(values) == 60
        assert all(0 <= v <= 255 for v in values)

    def test_csv_raster_with_upper_variable(self, tmp_path, data_n8):
        out = tmp_path / "z.csv"
        rc = main(["project", "--in", str(data_n8), "--var", "z",
                   "--level", "6", "--nlat", "13", "--nlon", "24",
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "lat,lon,z"
        assert len(lines) == 1 + 13 * 24

    def test_unknown_variable_exits(self, tmp_path, data_n8):
        with pytest.raises(SystemExit):
            main(["project", "--in", str(data_n8), "--var", "vorticity",
                  "--out", str(tmp_path / "x.csv")])


class TestTrain:
    def test_tiny_run_leaves_artifacts(self, tmp_path, data_n8, capsys):
        run_dir = tmp_path / "run"
        rc = main(["train", "--data", str(data_n8), "--run-dir", str(run_dir),
                   "--steps", "2", "--checkpoint-every", "5"])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "step 2: loss" in printed
        assert "ckpt_step000002.ckpt" in printed
        assert (run_dir / "ckpt_step000002.ckpt").exists()
        log = (run_dir / "train_log.csv").read_text().splitlines()
        assert log[0] == "step,loss"
        assert len(log) == 3
        snapshot = json.loads((run_dir / "train_config.json").read_text())
        assert snapshot["steps"] == 2
        assert snapshot["seed"] == 0

    def test_config_file_with_flag_override(self, tmp_path, data_n8):
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps(
            {"steps": 9, "lr": 1e-3, "seed": 5, "checkpoint_every": 50}))
        run_dir = tmp_path / "run"
        rc = main(["train", "--data", str(data_n8), "--run-dir", str(run_dir),
                   "--config", str(cfg), "--steps", "1"])
        assert rc == 0
        snapshot = json.loads((run_dir / "train_config.json").read_text())
        assert snapshot["steps"] == 1          # flag beats file
        assert snapshot["lr"] == 1e-3          # file beats default
        assert snapshot["seed"] == 5           # file seed honoured
        assert snapshot["checkpoint_every"] == 50

    def test_env_seed_beats_config_file(self, tmp_path, data_n8, monkeypatch):
        monkeypatch.setenv("PEAR_SEED", "11")
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps({"steps": 1, "seed": 5}))
        run_dir = tmp_path / "run"
        main(["train", "--data", str(data_n8), "--run-dir", str(run_dir),
              "--config", str(cfg)])
        snapshot = json.loads((run_dir / "train_config.json").read_text())
        assert snapshot["seed"] == 11

    def test_steps_required_somewhere(self, tmp_path, data_n8):
        with pytest.raises(SystemExit):
            main(["train", "--data", str(data_n8),
                  "--run-dir", str(tmp_path / "run")])


class TestEvalAndRollout:
    @pytest.fixture
    def ckpt(self, tmp_path, data_n8):
        run_dir = tmp_path / "run"
        main(["train", "--data", str(data_n8), "--run-dir", str(run_dir),
              "--steps", "1", "--checkpoint-every", "10"])
        return run_dir / "ckpt_step000001.ckpt"

    def test_eval_writes_metric_table(self, tmp_path, data_n8, ckpt, capsys):
        out = tmp_path / "eval.csv"
        rc = main(["eval", "--ckpt", str(ckpt), "--data", str(data_n8),
                   "--out", str(out)])
        assert rc == 0
        assert "evaluated 2 pairs" in capsys.readouterr().out
        lines = out.read_text().splitlines()
        assert lines[0] == "lead_time_days,variable,level,rmse,acc,n_samples"
        assert len(lines) == 1 + 4 + 13 * 5
        assert all(line.startswith("1,") for line in lines[1:])

    def test_rollout_clamps_to_horizon(self, tmp_path, data_n8, ckpt, capsys):
        out = tmp_path / "roll.csv"
        rc = main(["rollout", "--ckpt", str(ckpt), "--data", str(data_n8),
                   "--steps", "10", "--out", str(out)])
        assert rc == 0
        assert "rolled out 2 days" in capsys.readouterr().out
        lines = out.read_text().splitlines()
        leads = sorted({int(line.split(",")[0]) for line in lines[1:]})
        assert leads == [1, 2]

    def test_rollout_without_horizon_exits(self, tmp_path, data_n8, ckpt):
        with pytest.raises(SystemExit):
            main(["rollout", "--ckpt", str(ckpt), "--data", str(data_n8),
                  "--start", "2", "--out", str(tmp_path / "x.csv")])

    def test_eval_acc_defined_when_days_repeat(self, tmp_path, ckpt):
        # a short year gives each day several members, so the climatology
        # differs from the truth and the anomaly correlation is defined
        data = tmp_path / "wrap.stf"
        main(["gen-data", "--out", str(data), "--nside", "8", "--steps", "9",
              "--year-length", "4", "--seed", "2"])
        out = tmp_path / "eval.csv"
        main(["eval", "--ckpt", str(ckpt), "--data", str(data),
              "--out", str(out)])
        rows = out.read_text().splitlines()[1:]
        with_acc = [r for r in rows if r.split(",")[4] != ""]
        assert with_acc, "no row carries a defined anomaly correlation"
        assert all(int(r.split(",")[5]) > 0 for r in with_acc)


class TestIntrospection:
    def test_grid_info(self, capsys):
        rc = main(["grid", "info", "--nside", "8"])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "n_pix         768" in printed
        assert "rings         31" in printed

    def test_mask_dump_counts_and_files(self, tmp_path, capsys):
        out = tmp_path / "masks"
        rc = main(["mask", "dump", "--nside", "8", "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "fine:" in printed and "coarse:" in printed
        fine = np.load(out / "mask_fine.npy")
        assert fine.ndim == 3 and fine.shape[1] == fine.shape[2]

    @pytest.mark.parametrize("nside,count", [(8, 1558688), (64, 4277408)])
    def test_params_count(self, capsys, nside, count):
        rc = main(["params", "count", "--nside", str(nside)])
        assert rc == 0
        assert capsys.readouterr().out.strip() == str(count)
