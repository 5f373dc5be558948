import csv
import json

import pytest

from mpoverify.cli import DEFAULTS, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def numeric_fields(doc):
    if isinstance(doc, dict):
        return {k: numeric_fields(v) for k, v in doc.items() if k not in ("version", "config")}
    if isinstance(doc, list):
        return [numeric_fields(v) for v in doc]
    return doc


class TestMpoBuild:
    def test_mcx_exact(self, tmp_path, capsys):
        code, out, _ = run(capsys, "mpo-build", "--kind", "mcx", "--n", "5", "--chi", "2", "--out", str(tmp_path))
        assert code == 0
        assert "fidelity 1.000000" in out
        assert (tmp_path / "run_mcx_n5_chi2.mpo.json").exists()
        assert (tmp_path / "run_mcx_n5_chi2.mpo.bin").exists()
        summary = json.loads((tmp_path / "run_mcx_n5_chi2.summary.json").read_text())
        assert summary["config"]["circuit"]["n"] == 5
        assert summary["version"].startswith("0.1.0")

    def test_qft_chi8(self, tmp_path, capsys):
        code, out, _ = run(capsys, "mpo-build", "--kind", "qft", "--n", "8", "--chi", "8", "--out", str(tmp_path))
        assert code == 0
        fid = float(out.split("fidelity ")[1].split()[0])
        assert fid >= 0.99

    def test_extreme_truncation(self, tmp_path, capsys):
        code, out, _ = run(capsys, "mpo-build", "--kind", "qft", "--n", "6", "--chi", "1", "--out", str(tmp_path))
        assert code == 0
        assert float(out.split("fidelity ")[1].split()[0]) < 0.5
        assert float(out.split("discarded weight: ")[1].split()[0]) > 0

    def test_wide_circuit_skips_dense_fidelity(self, tmp_path, capsys):
        code, out, _ = run(capsys, "mpo-build", "--kind", "mcx", "--n", "14", "--chi", "2", "--out", str(tmp_path))
        assert code == 0 and "fidelity" not in out


class TestVerifierCheck:
    @pytest.mark.parametrize("kind,n,chi", [("mcx", 4, 2), ("qft", 6, 8), ("identity", 3, 1)])
    def test_runs(self, tmp_path, capsys, kind, n, chi):
        code, _, _ = run(capsys, "verifier-check", "--kind", kind, "--n", str(n), "--chi", str(chi), "--trials", "50", "--out", str(tmp_path))
        assert code == 0
        stem = tmp_path / f"run_{kind}_n{n}_chi{chi}"
        summary = json.loads(stem.with_name(stem.name + ".verifier_summary.json").read_text())
        assert summary["gate_count"] == n
        with open(stem.with_name(stem.name + ".verifier.csv")) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["trial", "matched_fidelity", "mismatched_fidelity", "postselect_probability"]
        assert len(rows) == 51
        assert summary["matched_mean"] >= 0.98
        assert all(0.0 <= float(x) <= 1.0 for row in rows[1:] for x in row[1:])

    def test_width_guard(self, tmp_path, capsys):
        code, _, err = run(capsys, "verifier-check", "--kind", "mcx", "--n", "13", "--out", str(tmp_path))
        assert code == 3 and "numeric guard" in err


class TestDepthScan:
    def test_qft_ordering(self, tmp_path, capsys):
        code, _, _ = run(capsys, "depth-scan", "--kind", "qft", "--out", str(tmp_path))
        assert code == 0
        stars = json.loads((tmp_path / "run_qft.crossover.json").read_text())["n_star"]
        assert stars["2"] < stars["4"] < stars["8"]
        assert (tmp_path / "run_qft_chi8.depth.csv").read_text().startswith("n,circuit_depth,verifier_depth\n")

    def test_mcx(self, tmp_path, capsys):
        code, out, _ = run(capsys, "depth-scan", "--kind", "mcx", "--chis", "2", "--n-max", "32", "--out", str(tmp_path))
        assert code == 0
        assert json.loads((tmp_path / "run_mcx.crossover.json").read_text())["n_star"]["2"] is not None

    def test_degenerate_model(self, tmp_path, capsys):
        code, _, _ = run(
            capsys, "depth-scan", "--kind", "qft", "--chis", "8", "--n-max", "10",
            "--unitary-cost", "zero", "--no-verifier-routing", "--out", str(tmp_path),
        )
        assert code == 0
        assert json.loads((tmp_path / "run_qft.crossover.json").read_text())["n_star"]["8"] == 2

    def test_rejects_identity(self, tmp_path, capsys):
        code, _, _ = run(capsys, "depth-scan", "--kind", "identity", "--out", str(tmp_path))
        assert code == 2


class TestCalibrate:
    def test_method2_and_determinism(self, tmp_path, capsys):
        args = ["calibrate", "--method", "2", "--out", str(tmp_path)]
        code, out, _ = run(capsys, *args)
        assert code == 0
        assert "f_initial" in out
        path = tmp_path / "run_mcx_n3_chi2.method2.report.json"
        first = json.loads(path.read_text())
        trace = (tmp_path / "run_mcx_n3_chi2.method2.trace.csv").read_text()
        assert first["f_final"] >= 0.97
        assert run(capsys, *args)[0] == 0
        assert numeric_fields(json.loads(path.read_text())) == numeric_fields(first)
        assert (tmp_path / "run_mcx_n3_chi2.method2.trace.csv").read_text() == trace

    def test_zero_noise_method1(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"noise": {"coherent_mean": 0.0, "coherent_std": 0.0}, "calibrate": {"method": 1}}))
        code, _, _ = run(capsys, "calibrate", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "run_mcx_n3_chi2.method1.report.json").read_text())
        assert report["f_final"] >= 0.999

    def test_not_converged_exit_code(self, tmp_path, capsys):
        code, _, err = run(capsys, "calibrate", "--max-evals", "20", "--out", str(tmp_path))
        assert code == 4 and "did not converge" in err
        assert (tmp_path / "run_mcx_n3_chi2.method2.report.json").exists()


class TestIncoherent:
    def test_depolarizing(self, tmp_path, capsys):
        code, _, _ = run(
            capsys, "incoherent-analysis", "--noise-mean", "0", "--noise-std", "0",
            "--depolarizing", "0.05", "--out", str(tmp_path),
        )
        assert code == 0
        doc = json.loads((tmp_path / "run_mcx_n3_chi2.incoherent.json").read_text())
        assert doc["gain"] < 0.02 and doc["condition_number"] > 1

    def test_coherent_only(self, tmp_path, capsys):
        assert run(capsys, "incoherent-analysis", "--out", str(tmp_path))[0] == 0
        doc = json.loads((tmp_path / "run_mcx_n3_chi2.incoherent.json").read_text())
        assert doc["f_after"] >= 0.999

    def test_noiseless(self, tmp_path, capsys):
        run(capsys, "incoherent-analysis", "--noise-mean", "0", "--noise-std", "0", "--out", str(tmp_path))
        doc = json.loads((tmp_path / "run_mcx_n3_chi2.incoherent.json").read_text())
        assert doc["f_before"] == pytest.approx(1.0) and doc["f_after"] == pytest.approx(1.0)


class TestConfig:
    def test_unknown_key_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "circuit": {"bogus": 1}\n}\n')
        code, _, err = run(capsys, "mpo-build", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 2
        assert f"{cfg}:2:" in err and "circuit.bogus" in err

    def test_syntax_error_reports_position(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "seed": 1,\n  oops\n}\n')
        code, _, err = run(capsys, "mpo-build", "--config", str(cfg))
        assert code == 2 and f"{cfg}:3:" in err

    def test_flags_override_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"circuit": {"kind": "qft", "n": 4, "chi": 4}}))
        code, _, _ = run(capsys, "mpo-build", "--config", str(cfg), "--n", "5", "--out", str(tmp_path))
        assert code == 0
        assert (tmp_path / "run_qft_n5_chi4.mpo.json").exists()

    def test_invalid_values(self, tmp_path, capsys):
        assert run(capsys, "mpo-build", "--n", "0")[0] == 2
        assert run(capsys, "calibrate", "--depolarizing", "1.5")[0] == 2

    def test_defaults_cover_every_section(self):
        assert set(DEFAULTS) >= {"circuit", "noise", "optimizer", "depth_model", "seed", "output_dir"}
