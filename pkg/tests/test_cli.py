import math

import numpy as np
import pytest

from cmim import cli
from cmim.config import RunConfig
from cmim.errors import DivergenceError
from cmim.evaluation import read_report_csv, read_slopes_csv
from cmim.verify import (
    check_calibration,
    check_concentration,
    check_objective_gradients,
    check_offset_equivalence,
    closed_form_mean,
    format_report,
    relative_error,
)

TINY = RunConfig(latent_dim=2, hidden=(8,), total_steps=20, val_interval=10)


@pytest.fixture
def tiny_ini(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY.to_text())
    return str(p)


def train_one(tmp_path, ini, variant, name):
    out = tmp_path / name
    rc = cli.main(["train", "--config", ini, "--variant", variant, "--dataset", "blobs0", "--batch-size", "4",
                   "--out", str(out)])
    assert rc == cli.EXIT_OK
    return out


class TestExitCodes:
    def test_codes_distinct(self):
        codes = [cli.EXIT_OK, cli.EXIT_CONFIG, cli.EXIT_DATA, cli.EXIT_DIVERGENCE, cli.EXIT_VERIFY]
        assert len(set(codes)) == 5

    def test_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[run]\nvariant = nope\n")
        assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_unknown_dataset(self, tmp_path, tiny_ini):
        rc = cli.main(["train", "--config", tiny_ini, "--dataset", "nosuch", "--out", str(tmp_path / "o")])
        assert rc == cli.EXIT_DATA

    def test_missing_checkpoint(self, tmp_path):
        assert cli.main(["eval", str(tmp_path / "none.cmm"), "--out", str(tmp_path / "e")]) == cli.EXIT_DATA

    def test_divergence(self, tmp_path, tiny_ini, monkeypatch):
        def boom(*a, **k):
            raise DivergenceError("nan loss", step=7)

        monkeypatch.setattr(cli, "train", boom)
        assert cli.main(["train", "--config", tiny_ini, "--out", str(tmp_path / "o")]) == cli.EXIT_DIVERGENCE

    def test_sensitivity_needs_two_sizes(self, tmp_path, tiny_ini):
        rc = cli.main(["sensitivity", "--config", tiny_ini, "--batch-sizes", "4", "--out", str(tmp_path / "s")])
        assert rc == cli.EXIT_CONFIG


class TestTrainEval:
    def test_train_reproducible(self, tmp_path, tiny_ini):
        a = train_one(tmp_path, tiny_ini, "cMIM", "a")
        b = train_one(tmp_path, tiny_ini, "cMIM", "b")
        for name in ("best.cmm", "final.cmm", "train_log.csv", "config.ini"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_eval_rows_and_bytes(self, tmp_path, tiny_ini):
        c = train_one(tmp_path, tiny_ini, "cMIM", "c")
        n = train_one(tmp_path, tiny_ini, "InfoNCE", "n")
        for out in ("e1", "e2"):
            rc = cli.main(["eval", str(c / "best.cmm"), str(n / "best.cmm"), "--out", str(tmp_path / out)])
            assert rc == cli.EXIT_OK
        rows = read_report_csv(tmp_path / "e1" / "eval_report.csv")
        assert sum(r.variant == "cMIM" for r in rows) == 6
        assert sum(r.variant == "InfoNCE" for r in rows) == 3
        for name in ("eval_report.csv", "zscores_mean_encoding.svg", "zscores_informative.svg"):
            assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()


class TestToyCli:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "toy"
        assert cli.main(["toy2d", "--steps", "20", "--seeds", "0,1", "--out", str(out)]) == cli.EXIT_OK
        assert (out / "seed1" / "summary.csv").exists()
        assert (out / "seed0" / "snapshot_00020.svg").exists()
        assert "# preset: desk" in capsys.readouterr().out


class TestSensitivityCli:
    def test_grid(self, tmp_path, tiny_ini):
        args = ["sensitivity", "--config", tiny_ini, "--variants", "cMIM,InfoNCE", "--datasets", "blobs0",
                "--batch-sizes", "4,8", "--seeds", "0"]
        assert cli.main(args + ["--out", str(tmp_path / "s1")]) == cli.EXIT_OK
        rows = read_report_csv(tmp_path / "s1" / "eval_report.csv")
        assert len(rows) == 2 * 6 + 2 * 3
        slopes = read_slopes_csv(tmp_path / "s1" / "slopes.csv")
        assert len(slopes["cMIM"]["slopes"]) == 6 and len(slopes["InfoNCE"]["slopes"]) == 3
        summary = (tmp_path / "s1" / "summary.txt").read_text()
        assert summary.startswith("# sensitivity\n# preset: desk\n# deviation:")
        assert cli.main(args + ["--out", str(tmp_path / "s2")]) == cli.EXIT_OK
        for name in ("eval_report.csv", "runs.csv", "slopes.csv", "slopes.svg", "summary.txt"):
            assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()


class TestVerify:
    def test_individual_checks_pass(self):
        assert check_offset_equivalence(n_batches=50).passed
        assert check_calibration().passed
        assert check_objective_gradients(seeds=(0,)).passed
        assert check_concentration(trials=2000).passed

    def test_wrong_offset_fails(self):
        r = check_offset_equivalence(n_batches=20, offset_fn=lambda b: math.log(b))
        assert not r.passed and r.value > 1e-3

    def test_report_has_no_timing(self):
        r = check_calibration()
        text = format_report([r, r], header="# h")
        assert text.endswith("2/2 checks passed\n") and text.startswith("# h\n")
        assert format_report([r]) == format_report([check_calibration()])

    def test_helpers(self):
        assert closed_form_mean(1.0) == pytest.approx(math.sinh(1.0))
        assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0

    @pytest.mark.slow
    def test_mutated_cli_exits_nonzero(self, tmp_path):
        rc = cli.main(["verify", "--quick", "--mutate-offset", "--out", str(tmp_path)])
        assert rc == cli.EXIT_VERIFY
        report = (tmp_path / "verification_report.txt").read_text()
        assert "FAIL" in report
