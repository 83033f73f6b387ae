import json
import os

from axialtrack.cli import cli_main
from axialtrack.pgm import read_pgm


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _all_pgms(root):
    found = {}
    for dirpath, _, names in os.walk(root):
        for name in sorted(names):
            if name.endswith(".pgm"):
                full = os.path.join(dirpath, name)
                found[os.path.relpath(full, root)] = _read(full)
    return found


class TestDemo:
    def test_oracle_scores_and_determinism(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert cli_main(["demo", "--seed", "7", "--clip-len", "2", "--out", str(out_a)]) == 0
        assert cli_main(["demo", "--seed", "7", "--clip-len", "2", "--out", str(out_b)]) == 0

        report = json.loads(_read(out_a / "report.json"))
        assert report["vpq_near_online"] == 1.0
        assert report["vpq_offline"] == 1.0
        assert report["vpq_near_online_shuffled"] == 1.0

        text = _read(out_a / "report.txt").decode()
        assert "vpq_near_online = 1.0" in text
        assert "vpq_offline = 1.0" in text

        assert _read(out_a / "report.json") == _read(out_b / "report.json")
        assert _all_pgms(out_a) == _all_pgms(out_b)

    def test_heatmaps_and_dumps_exist(self, tmp_path):
        out = tmp_path / "demo"
        assert cli_main(["demo", "--seed", "1", "--out", str(out)]) == 0
        assert (out / "gt" / "tube_000" / "meta").exists()
        assert (out / "pred_near" / "tube_000" / "t0000.pgm").exists()
        img = read_pgm(out / "heatmaps" / "t0000.pgm")
        assert img.shape == (32, 32)


class TestBench:
    def test_single_config_ratio(self, tmp_path):
        out = tmp_path / "bench"
        rc = cli_main(["bench", "--t", "2", "--h", "4", "--w", "4", "--d", "8", "--out", str(out)])
        assert rc == 0
        text = _read(out / "report.txt").decode()
        assert "ratio = 2.0" in text
        assert "full_stage1_scores_measured = 8192" in text
        report = json.loads(_read(out / "report.json"))
        assert report["exact_match"] is True

    def test_sweep_report(self, tmp_path):
        out = tmp_path / "sweep"
        assert cli_main(["bench", "--out", str(out)]) == 0
        report = json.loads(_read(out / "report.json"))
        assert len(report) == 12
        for point in report.values():
            assert point["exact_match"] is True


class TestAttn:
    def test_dump(self, tmp_path):
        out = tmp_path / "attn"
        rc = cli_main(["attn", "--seed", "3", "--ref-t", "1", "--out", str(out)])
        assert rc == 0
        img = read_pgm(out / "heatmaps" / "t0000.pgm")
        assert img.shape == (32, 32)

    def test_reference_out_of_range(self, tmp_path, capsys):
        rc = cli_main(["attn", "--ref-t", "99", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestEval:
    def test_round_trip_perfect_score(self, tmp_path):
        demo_out = tmp_path / "demo"
        assert cli_main(["demo", "--seed", "5", "--out", str(demo_out)]) == 0
        eval_out = tmp_path / "eval"
        rc = cli_main([
            "eval",
            "--pred", str(demo_out / "pred_offline"),
            "--gt", str(demo_out / "gt"),
            "--out", str(eval_out),
        ])
        assert rc == 0
        report = json.loads(_read(eval_out / "report.json"))
        assert report["vpq"] == 1.0

    def test_missing_dump_is_validation_error(self, tmp_path, capsys):
        rc = cli_main(["eval", "--pred", "/nonexistent", "--gt", "/nonexistent", "--out", str(tmp_path)])
        assert rc == 1


class TestErrors:
    def test_unknown_flag_prints_usage_and_exits_one(self, capsys):
        rc = cli_main(["demo", "--bogus"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_no_subcommand_exits_one(self):
        assert cli_main([]) == 1

    def test_help_exits_zero(self, capsys):
        assert cli_main(["--help"]) == 0

    def test_invalid_config_value(self, tmp_path, capsys):
        rc = cli_main(["demo", "--t", "1", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_config_file_and_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.txt"
        cfg_path.write_text("l = 4\nh = 16\nw = 16\nseed = 2\n")
        out = tmp_path / "out"
        rc = cli_main(["demo", "--config", str(cfg_path), "--seed", "9", "--out", str(out)])
        assert rc == 0
        report = json.loads(_read(out / "report.json"))
        assert report["config"]["l"] == 4
        assert report["config"]["seed"] == 9

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.txt"
        cfg_path.write_text("bogus = 4\n")
        rc = cli_main(["demo", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert rc == 1
