import numpy as np
import pytest
from scipy.special import expit

from tailbayes import dataio
from tailbayes.cli import main

FIT_SPEED = ["--iterations", "1500", "--burn-in", "600", "--cv-iterations", "800", "--cv-burn-in", "300"]


def run(args):
    return main([str(a) for a in args])


@pytest.fixture()
def train_csv(tmp_path):
    path = tmp_path / "train.csv"
    assert run(["simulate", "--study", "sim1", "--n", 300, "--q", 1.0, "--seed", 3, "--out", path]) == 0
    return path


def fit_artifact(tmp_path, train_csv, out_name="model", extra=()):
    out = tmp_path / out_name
    code = run(
        ["fit", train_csv, "--t", 0.3, "--lambda-grid", "0,5", "--seed", 7, "--jobs", 1,
         "--out", out, *FIT_SPEED, *extra]
    )
    assert code == 0
    return out


class TestSimulate:
    def test_writes_csv_and_sidecar(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert run(["simulate", "--study", "sim3", "--n", 100, "--psi", 0.1,
                    "--seed", 5, "--with-oracle", "--out", out]) == 0
        x, y, names, _ = dataio.read_dataset_csv(out)
        assert names == ["x1", "x2", "true_probability", "contaminated"]
        assert x.shape[0] == 110
        meta = dataio.read_manifest(str(out) + ".meta.json")
        assert meta["study"] == "sim3" and meta["psi"] == 0.1 and meta["seed"] == 5
        assert meta["rows_written"] == 110

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            run(["simulate", "--study", "sim2", "--n", 50, "--seed", 9, "--out", out])
        assert a.read_bytes() == b.read_bytes()


class TestFit:
    def test_byte_identical_manifests(self, tmp_path, train_csv):
        m1 = fit_artifact(tmp_path, train_csv, "m1")
        m2 = fit_artifact(tmp_path, train_csv, "m2")
        assert (m1 / "manifest.json").read_bytes() == (m2 / "manifest.json").read_bytes()
        assert (m1 / "draws.csv").read_bytes() == (m2 / "draws.csv").read_bytes()
        assert (m1 / "weights.csv").read_bytes() == (m2 / "weights.csv").read_bytes()

    def test_utilities_derive_threshold(self, tmp_path, train_csv):
        out = tmp_path / "m_util"
        code = run(["fit", train_csv, "--utilities", "9,0,0,1", "--lambda-grid", "0",
                    "--seed", 1, "--out", out, *FIT_SPEED])
        assert code == 0
        manifest = dataio.read_manifest(out / "manifest.json")
        assert manifest["threshold"] == 0.1
        assert manifest["utilities"] == {"u_tp": 9.0, "u_fp": 0.0, "u_fn": 0.0, "u_tn": 1.0}

    def test_missing_outcome_column_is_data_error_without_outputs(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x1,x2\n1,2\n", encoding="utf-8")
        out = tmp_path / "should_not_exist"
        assert run(["fit", bad, "--t", 0.3, "--out", out]) == 3
        assert not out.exists()

    def test_threshold_required(self, tmp_path, train_csv):
        assert run(["fit", train_csv, "--out", tmp_path / "x"]) == 2

    def test_manifest_records_configuration(self, tmp_path, train_csv):
        out = fit_artifact(tmp_path, train_csv)
        manifest = dataio.read_manifest(out / "manifest.json")
        assert manifest["lambda_grid"] == [0.0, 5.0]
        assert manifest["lambda_star"] in (0.0, 5.0)
        assert manifest["seeds"]["base"] == 7
        assert manifest["seeds"]["cv_folds"] == [8, 9, 10, 11, 12]
        assert manifest["split"]["design_rows"] == 60
        assert manifest["split"]["development_rows"] == 240
        assert len(manifest["split"]["indices_sha256"]) == 64
        assert 0.0 < manifest["ess_fraction"] <= 1.0
        rows = dataio.read_manifest(out / "manifest.json")["ess_grid"]
        assert rows[0]["ess_fraction"] == 1.0

    def test_standardize_recorded_and_rhat(self, tmp_path, train_csv):
        out = fit_artifact(tmp_path, train_csv, "m_std", extra=["--standardize", "--rhat-chains", "2"])
        manifest = dataio.read_manifest(out / "manifest.json")
        assert manifest["standardize"] is not None
        assert len(manifest["standardize"]["means"]) == 2
        assert len(manifest["rhat"]) == 3
        assert all(0.8 < r < 1.5 for r in manifest["rhat"])

    def test_external_pi_u(self, tmp_path, train_csv):
        pi_path = tmp_path / "pi.csv"
        pi_path.write_text("pi_u\n" + "\n".join(["0.3"] * 300) + "\n", encoding="utf-8")
        out = tmp_path / "m_ext"
        code = run(["fit", train_csv, "--t", 0.3, "--lambda-grid", "0,5", "--seed", 2,
                    "--pi-u-file", pi_path, "--out", out, *FIT_SPEED])
        assert code == 0
        manifest = dataio.read_manifest(out / "manifest.json")
        assert manifest["external_pi_u"] == str(pi_path)
        assert manifest["split"]["design_rows"] == 0
        assert manifest["split"]["development_rows"] == 300

    def test_config_file_defaults_and_flag_override(self, tmp_path, train_csv):
        cfg = tmp_path / "fit.cfg"
        cfg.write_text(
            "t = 0.3\nlambda-grid = 0,5\nseed = 7\niterations = 1500\nburn-in = 600\n"
            "cv-iterations = 800\ncv-burn-in = 300\n",
            encoding="utf-8",
        )
        out1 = tmp_path / "m_cfg"
        assert run(["fit", train_csv, "--config", cfg, "--out", out1]) == 0
        ref = fit_artifact(tmp_path, train_csv, "m_ref")
        assert (out1 / "draws.csv").read_bytes() == (ref / "draws.csv").read_bytes()
        # explicit flag wins over the config value
        out2 = tmp_path / "m_cfg2"
        assert run(["fit", train_csv, "--config", cfg, "--seed", 8, "--out", out2]) == 0
        assert dataio.read_manifest(out2 / "manifest.json")["seeds"]["base"] == 8


class TestPredict:
    def test_roundtrip(self, tmp_path, train_csv):
        model = fit_artifact(tmp_path, train_csv)
        out = tmp_path / "preds.csv"
        assert run(["predict", "--model", model, "--data", train_csv, "--out", out]) == 0
        header, rows = _read_csv(out)
        assert header == ["id", "mean_probability", "predictive_sd", "classification"]
        assert len(rows) == 300
        for row in rows:
            p = float(row[1])
            assert 0.0 <= p <= 1.0
            assert row[3] == ("positive" if p >= 0.3 else "negative")

    def test_permuted_schema_rejected(self, tmp_path, train_csv):
        model = fit_artifact(tmp_path, train_csv)
        permuted = tmp_path / "permuted.csv"
        header, rows = _read_csv(train_csv)
        order = [header.index("x2"), header.index("x1"), header.index("y")]
        lines = [",".join(header[i] for i in order)]
        lines += [",".join(row[i] for i in order) for row in rows]
        permuted.write_text("\n".join(lines) + "\n", encoding="utf-8")
        assert run(["predict", "--model", model, "--data", permuted, "--out", tmp_path / "p.csv"]) == 3

    def test_single_draw_artifact_gives_plug_in(self, tmp_path, train_csv):
        model = fit_artifact(tmp_path, train_csv)
        names, draws = dataio.read_draws_csv(model / "draws.csv")
        beta = draws.mean(axis=0)
        dataio.write_draws_csv(model / "draws.csv", names, beta[None, :])
        out = tmp_path / "preds1.csv"
        assert run(["predict", "--model", model, "--data", train_csv, "--out", out]) == 0
        _, rows = _read_csv(out)
        x, _, _, _ = dataio.read_dataset_csv(train_csv)
        expected = expit(beta[0] + x @ beta[1:])
        got = np.array([float(r[1]) for r in rows])
        np.testing.assert_allclose(got, expected, rtol=1e-12)
        assert all(float(r[2]) == 0.0 for r in rows)


class TestEvaluate:
    def _scored(self, tmp_path, name, probs, outcomes):
        path = tmp_path / name
        lines = ["prob,y"] + [f"{p},{int(y)}" for p, y in zip(probs, outcomes)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_identical_files_give_zero_delta(self, tmp_path):
        rng = np.random.default_rng(0)
        probs = rng.uniform(size=40)
        outcomes = (rng.uniform(size=40) < probs).astype(int)
        a1 = self._scored(tmp_path, "a1.csv", probs, outcomes)
        a2 = self._scored(tmp_path, "a2.csv", probs, outcomes)
        out = tmp_path / "eval"
        code = run(["evaluate", "--scored-a", a1, "--scored-a", a2,
                    "--scored-b", a1, "--scored-b", a2,
                    "--thresholds", "0.1:0.9:0.1", "--out", out])
        assert code == 0
        header, rows = _read_csv(out / "delta_nb.csv")
        assert header == ["threshold", "mean_delta", "se_delta"]
        assert len(rows) == 9
        for row in rows:
            assert float(row[1]) == 0.0 and float(row[2]) == 0.0

    def test_treat_none_scores_zero(self, tmp_path):
        outcomes = np.array([1, 0, 1, 0, 0])
        a = self._scored(tmp_path, "none.csv", np.zeros(5), outcomes)
        out = tmp_path / "eval2"
        assert run(["evaluate", "--scored-a", a, "--thresholds", "0.2,0.5,0.8", "--out", out]) == 0
        _, rows = _read_csv(out / "nb.csv")
        assert len(rows) == 3
        assert all(float(r[6]) == 0.0 for r in rows)

    def test_threshold_sweep_shape(self, tmp_path):
        rng = np.random.default_rng(1)
        probs = rng.uniform(size=30)
        outcomes = (rng.uniform(size=30) < 0.5).astype(int)
        a = self._scored(tmp_path, "a.csv", probs, outcomes)
        b = self._scored(tmp_path, "b.csv", probs[::-1], outcomes)
        out = tmp_path / "eval3"
        code = run(["evaluate", "--scored-a", a, "--scored-a", b,
                    "--scored-b", b, "--scored-b", a,
                    "--thresholds", "0.1:0.9:0.05", "--out", out])
        assert code == 0
        _, nb_rows = _read_csv(out / "nb.csv")
        thresholds = np.round(np.arange(0.1, 0.925, 0.05), 12)
        assert len(nb_rows) == 2 * 2 * len(thresholds)
        _, delta_rows = _read_csv(out / "delta_nb.csv")
        assert len(delta_rows) == len(thresholds)

    def test_mismatched_split_counts_rejected(self, tmp_path):
        a = self._scored(tmp_path, "a.csv", [0.5], [1])
        out = tmp_path / "eval4"
        assert run(["evaluate", "--scored-a", a, "--scored-a", a,
                    "--scored-b", a, "--thresholds", "0.5", "--out", out]) == 3

    def test_model_plus_data_mode(self, tmp_path, train_csv):
        model = fit_artifact(tmp_path, train_csv)
        split2 = tmp_path / "split2.csv"
        assert run(["simulate", "--study", "sim1", "--n", 120, "--seed", 8, "--out", split2]) == 0
        out = tmp_path / "eval5"
        code = run(["evaluate", "--model-a", model, "--model-b", model,
                    "--data", train_csv, "--data", split2,
                    "--thresholds", "0.2,0.3", "--out", out])
        assert code == 0
        _, nb_rows = _read_csv(out / "nb.csv")
        assert len(nb_rows) == 2 * 2 * 2  # models x splits x thresholds
        _, delta_rows = _read_csv(out / "delta_nb.csv")
        assert all(float(r[1]) == 0.0 for r in delta_rows)  # same artifact twice

    def test_evaluate_requires_one_input_mode(self, tmp_path):
        a = self._scored(tmp_path, "a.csv", [0.5], [1])
        assert run(["evaluate", "--thresholds", "0.5", "--out", tmp_path / "x"]) == 2
        assert run(["evaluate", "--scored-a", a, "--model-a", tmp_path,
                    "--thresholds", "0.5", "--out", tmp_path / "y"]) == 2


class TestReproduceAndEssGrid:
    def test_unknown_figure_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run(["reproduce", "--figure", "sim9-fig99", "--out", tmp_path / "r"])
        assert exc.value.code == 2

    def test_tiny_sim3_run_writes_tables(self, tmp_path):
        out = tmp_path / "rep"
        code = run(["reproduce", "--figure", "sim3-fig6", "--scale", 0.1,
                    "--seed", 1, "--jobs", 1, "--n-list", "200", "--psi-list", "0.1",
                    "--t-list", "0.3", "--lambda-grid", "0,10", "--out", out])
        assert code == 0
        header, rows = _read_csv(out / "nb_raw.csv")
        assert header == ["n", "psi", "t", "rep", "lambda_star", "nb_tb", "nb_sb", "delta", "nb_optimal"]
        assert len(rows) == 2  # 10% of 20 repetitions
        _, summary = _read_csv(out / "nb_summary.csv")
        assert len(summary) == 1
        manifest = dataio.read_manifest(out / "manifest.json")
        assert manifest["figure"] == "sim3-fig6" and manifest["repetitions"] == 2

    def test_ess_grid_from_file(self, tmp_path):
        pi = tmp_path / "pi.csv"
        pi.write_text("pi_u\n0.1\n0.4\n0.8\n", encoding="utf-8")
        out = tmp_path / "ess.csv"
        assert run(["ess-grid", "--pi-u-file", pi, "--t", 0.3, "--lambda-grid", "0,5,50",
                    "--out", out]) == 0
        header, rows = _read_csv(out)
        assert header == ["lambda", "ess", "ess_fraction", "low_ess"]
        assert float(rows[0][2]) == 1.0
        fractions = [float(r[2]) for r in rows]
        assert fractions[0] > fractions[1] > fractions[2]


def _read_csv(path):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader if row]
