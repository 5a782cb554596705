import csv
import json

import numpy as np
import pytest

from spharma import cli, simulate
from spharma.model import SpharmaModel


@pytest.fixture()
def model_path(tmp_path):
    path = tmp_path / "model.json"
    SpharmaModel.uniform(3, ar=[0.4], noise=1.0).save(path)
    return str(path)


@pytest.fixture()
def noncausal_path(tmp_path):
    path = tmp_path / "bad.json"
    SpharmaModel.uniform(1, ar=[1.0], noise=1.0).save(path)
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestSimulateCommand:
    def test_writes_series_and_sidecar(self, tmp_path, model_path):
        out = tmp_path / "run"
        code = run("simulate", "--model", model_path, "--n", 50,
                   "--seed", 7, "--out", out)
        assert code == cli.EXIT_OK
        series = simulate.HarmonicCoefficientSeries.load(out / "series.bin")
        assert series.n == 50 and series.band_limit == 3
        meta = json.loads((out / "series.json").read_text())
        assert meta["n"] == 50 and meta["seed"] == 7
        assert "config_hash" in meta

    def test_byte_identical_reruns(self, tmp_path, model_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run("simulate", "--model", model_path, "--n", 64,
                       "--seed", 3, "--out", out) == cli.EXIT_OK
        assert (out1 / "series.bin").read_bytes() == (out2 / "series.bin").read_bytes()
        assert (out1 / "series.json").read_text() == (out2 / "series.json").read_text()

    def test_noncausal_exits_2(self, tmp_path, noncausal_path, capsys):
        code = run("simulate", "--model", noncausal_path, "--n", 10,
                   "--out", tmp_path / "x")
        assert code == cli.EXIT_INPUT
        assert "multipoles" in capsys.readouterr().err

    def test_missing_model_exits_2(self, tmp_path):
        code = run("simulate", "--model", tmp_path / "nope.json", "--n", 10,
                   "--out", tmp_path / "x")
        assert code == cli.EXIT_INPUT

    def test_snapshot_csv(self, tmp_path, model_path):
        out = tmp_path / "run"
        code = run("simulate", "--model", model_path, "--n", 20, "--seed", 1,
                   "--out", out, "--snapshots", "0,5")
        assert code == cli.EXIT_OK
        with open(out / "field_t5.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {"colat", "lon", "value"} == set(rows[0])

    def test_io_failure_exits_3(self, tmp_path, model_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("file, not a directory")
        code = run("simulate", "--model", model_path, "--n", 10,
                   "--out", blocker / "sub")
        assert code == cli.EXIT_IO


class TestSpectrumCommand:
    def test_model_tables(self, tmp_path, model_path):
        out = tmp_path / "spec"
        code = run("spectrum", "--model", model_path, "--out", out,
                   "--max-lag", 5, "--n-lambda", 32)
        assert code == cli.EXIT_OK
        with open(out / "autocovariance.csv", newline="") as fh:
            acv_rows = list(csv.DictReader(fh))
        assert len(acv_rows) == 4 * 6
        with open(out / "spectral_density.csv", newline="") as fh:
            f_rows = list(csv.DictReader(fh))
        assert len(f_rows) == 4 * 33
        with open(out / "trace_norm.csv", newline="") as fh:
            t_rows = list(csv.DictReader(fh))
        assert len(t_rows) == 33
        # white-noise-free AR(1) density at lambda = 0 equals the closed form
        import math

        f0 = [float(r["f"]) for r in f_rows
              if r["l"] == "0" and abs(float(r["lambda"])) < 1e-12][0]
        assert abs(f0 - 1.0 / (2 * math.pi * 0.36)) < 1e-12

    def test_csv_parse_back_lossless(self, tmp_path, model_path):
        out = tmp_path / "spec"
        run("spectrum", "--model", model_path, "--out", out,
            "--max-lag", 3, "--n-lambda", 16)
        from spharma.model import model_autocovariance_table

        model = SpharmaModel.load(model_path)
        acv = model_autocovariance_table(model, 3)
        with open(out / "autocovariance.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                assert float(row["C"]) == acv.values[int(row["l"]), int(row["t"])]

    def test_lmax_truncates(self, tmp_path, model_path):
        out = tmp_path / "run"
        code = run("simulate", "--model", model_path, "--n", 16, "--seed", 1,
                   "--lmax", 1, "--out", out)
        assert code == cli.EXIT_OK
        series = simulate.HarmonicCoefficientSeries.load(out / "series.bin")
        assert series.band_limit == 1

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_empirical_close_to_model(self, tmp_path, model_path):
        run_dir = tmp_path / "run"
        run("simulate", "--model", model_path, "--n", 60000, "--seed", 11,
            "--out", run_dir)
        out = tmp_path / "spec"
        code = run("spectrum", "--series", run_dir / "series.bin",
                   "--out", out, "--max-lag", 3, "--n-lambda", 16)
        assert code == cli.EXIT_OK
        model = SpharmaModel.load(model_path)
        from spharma.model import model_autocovariance_table

        acv = model_autocovariance_table(model, 3)
        with open(out / "autocovariance.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                expect = acv.values[int(row["l"]), int(row["t"])]
                assert abs(float(row["C"]) - expect) < 0.05


class TestApproximateCommand:
    def test_pass_and_artifacts(self, tmp_path, model_path):
        out = tmp_path / "fit"
        code = run("approximate", "--target", model_path, "--eps", 0.05,
                   "--kind", "ma", "--out", out)
        assert code == cli.EXIT_OK
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["passed"] is True
        assert cert["total_l2"] <= 0.05
        fitted = SpharmaModel.load(out / "fitted_model.json")
        from spharma.model import check_invertible

        assert check_invertible(fitted).causal

    def test_huge_eps_order_zero_on_white(self, tmp_path):
        target = tmp_path / "white.json"
        SpharmaModel.white_noise(np.ones(3)).save(target)
        out = tmp_path / "fit"
        code = run("approximate", "--target", target, "--eps", 100.0,
                   "--kind", "ma", "--out", out)
        assert code == cli.EXIT_OK
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["order"] == 0

    def test_ar_kind_on_ma_target(self, tmp_path):
        target = tmp_path / "ma.json"
        SpharmaModel.uniform(2, ma=[0.5], noise=1.0).save(target)
        out = tmp_path / "fit"
        code = run("approximate", "--target", target, "--eps", 0.05,
                   "--kind", "ar", "--out", out)
        assert code == cli.EXIT_OK
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["passed"] and cert["order"] >= 1

    def test_order_cap_exits_4(self, tmp_path):
        target = tmp_path / "hard.json"
        SpharmaModel.uniform(0, ar=[0.9], noise=1.0).save(target)
        out = tmp_path / "fit"
        code = run("approximate", "--target", target, "--eps", 1e-4,
                   "--kind", "ma", "--order-cap", 4, "--out", out)
        assert code == cli.EXIT_BUDGET
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["passed"] is False and cert["order_cap_reached"] is True

    def test_nonpositive_eps_exits_2(self, tmp_path, model_path):
        code = run("approximate", "--target", model_path, "--eps", -1.0,
                   "--kind", "ma", "--out", tmp_path / "x")
        assert code == cli.EXIT_INPUT


class TestVerifyCommand:
    def test_well_specified_passes(self, tmp_path, model_path):
        run_dir = tmp_path / "run"
        run("simulate", "--model", model_path, "--n", 4096, "--seed", 13,
            "--out", run_dir)
        out = tmp_path / "ver"
        code = run("verify", "--series", run_dir / "series.bin", "--out", out)
        assert code == cli.EXIT_OK
        report = json.loads((out / "verify_report.json").read_text())
        assert report["passed"] is True
        assert {c["name"] for c in report["checks"]} == {
            "stationarity", "isotropy", "cramer_orthogonality", "ckl_truncation"}

    def test_trended_series_fails_stationarity(self, tmp_path, model_path):
        run_dir = tmp_path / "run"
        run("simulate", "--model", model_path, "--n", 4096, "--seed", 17,
            "--out", run_dir)
        series = simulate.HarmonicCoefficientSeries.load(run_dir / "series.bin")
        trended = series.values + 0.002 * np.arange(series.n)[None, :]
        simulate.HarmonicCoefficientSeries(
            series.band_limit, trended, series.provenance
        ).save(run_dir / "trended.bin")
        code = run("verify", "--series", run_dir / "trended.bin",
                   "--checks", "stationarity")
        assert code == cli.EXIT_VERIFY

    def test_unknown_check_exits_2(self, tmp_path, model_path):
        run_dir = tmp_path / "run"
        run("simulate", "--model", model_path, "--n", 2048, "--seed", 19,
            "--out", run_dir)
        code = run("verify", "--series", run_dir / "series.bin",
                   "--checks", "nonsense")
        assert code == cli.EXIT_INPUT

    def test_missing_series_exits_2(self, tmp_path):
        code = run("verify", "--series", tmp_path / "nope.bin")
        assert code == cli.EXIT_INPUT


def test_config_hash_stable_and_distinct(tmp_path, model_path):
    out1, out2, out3 = tmp_path / "1", tmp_path / "2", tmp_path / "3"
    run("simulate", "--model", model_path, "--n", 16, "--seed", 1, "--out", out1)
    run("simulate", "--model", model_path, "--n", 16, "--seed", 1, "--out", out2)
    run("simulate", "--model", model_path, "--n", 16, "--seed", 2, "--out", out3)
    h1 = json.loads((out1 / "series.json").read_text())["config_hash"]
    h2 = json.loads((out2 / "series.json").read_text())["config_hash"]
    h3 = json.loads((out3 / "series.json").read_text())["config_hash"]
    assert h1 == h2 != h3
