import json

import numpy as np
import pytest

import hrmt.experiments as experiments
from hrmt import io as hio
from hrmt.cli import main
from hrmt.config import EXPERIMENTS
from hrmt.errors import SolverError

SMALL = {
    "Sample": ({"n": 3}, {}),
    "Spectrum": ({"n": 4}, {"eigenvectors": True}),
    "PoissonTest": ({"n": 5}, {"truncation_m": [2]}),
    "GapRatioSweep": ({"n": 5}, {"c_values": [-1.0, 1.0]}),
    "Localization": ({"n": 5}, {"n_values": [4, 5]}),
    "DbmStability": ({"n": 5, "c": 0.5}, {}),
    "RpTest": ({"n": 5, "model": "rosenzweig_porter", "c": 0.5}, {"localization": True}),
    "IdentityCheck": ({"n": 3}, {}),
    "WegnerMinami": ({"n": 5, "model": "rosenzweig_porter", "c": 0.5}, {"spectral_averaging": True}),
}


def _config(tmp_path, experiment, realizations=4, **extra):
    ens, params = SMALL[experiment]
    doc = {"experiment": experiment, "ensemble": ens, "realizations": realizations, "master_seed": 11,
           "output_dir": str(tmp_path / "out"), "params": params}
    doc.update(extra)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_every_experiment_runs(tmp_path, experiment):
    cfg = _config(tmp_path, experiment)
    assert main([experiment, "--config", str(cfg), "--workers", "1"]) == 0
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["version"]
    assert len(manifest["seeds"]) == 4
    assert experiments.verify_manifest(out / "manifest.json") == []
    slug = experiments.SLUGS[experiment]
    rows = hio.read_csv(out / f"{slug}_realizations.csv")
    assert len(rows) == 4 + 1 and rows[-1]["realization"] == "summary"
    assert (out / f"{slug}_summary.json").exists()
    assert any(f["path"].endswith(".png") for f in manifest["files"]) or experiment == "IdentityCheck"


def test_spectrum_csv_layout(tmp_path):
    cfg = _config(tmp_path, "Spectrum", realizations=2)
    assert main(["spectrum", "--config", str(cfg), "--workers", "1", "--no-plots"]) == 0
    rows = hio.read_csv(tmp_path / "out" / "spectrum_00000.csv")
    assert list(rows[0]) == ["index", "eigenvalue"] and len(rows) == 16
    V, head = hio.read_hmat(tmp_path / "out" / "eigenvectors_00001.hmat")
    assert V.shape == (16, 16) and head["stream_index"] == 1
    assert not list((tmp_path / "out").glob("*.png"))


def test_sample_matrices_reproduce(tmp_path):
    cfg = _config(tmp_path, "Sample", realizations=2)
    assert main(["Sample", "--config", str(cfg), "--workers", "1", "--seed", "99"]) == 0
    M, head = hio.read_hmat(tmp_path / "out" / "matrix_00001.hmat")
    from hrmt.config import validate_config
    from hrmt.ensemble import RngStream, assemble
    ens = validate_config(cfg.read_text()).ensemble
    assert np.array_equal(M, assemble(ens, RngStream(99, 1)).matrix)
    assert head["master_seed"] == 99


def test_stability_sweep_columns(tmp_path):
    cfg = _config(tmp_path, "DbmStability")
    assert main(["dbm-stability", "--config", str(cfg), "--workers", "1"]) == 0
    rows = hio.read_csv(tmp_path / "out" / "dbm_stability_sweep.csv")
    assert list(rows[0]) == ["N", "c_flow", "eta", "t", "mean_s_gap", "stderr", "mean_g_gap",
                             "crude_bound", "theorem_shape"]
    assert len(rows) == 3


def test_phase_csv_columns(tmp_path):
    cfg = _config(tmp_path, "GapRatioSweep")
    assert main(["GapRatioSweep", "--config", str(cfg), "--workers", "1"]) == 0
    rows = hio.read_csv(tmp_path / "out" / "gap_ratio_sweep_phase.csv")
    assert list(rows[0]) == ["c", "mean_r", "stderr"] and [float(r["c"]) for r in rows] == [-1.0, 1.0]


def test_worker_count_does_not_change_bytes(tmp_path):
    outs = []
    for w in ("1", "3"):
        cfg = _config(tmp_path, "PoissonTest", realizations=6)
        out = tmp_path / f"w{w}"
        assert main(["PoissonTest", "--config", str(cfg), "--workers", w, "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
    assert names == sorted(p.name for p in outs[1].iterdir() if p.name != "manifest.json")
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_validate_prints_resolved_config(tmp_path, capsys):
    cfg = _config(tmp_path, "Sample")
    assert main(["validate", "--config", str(cfg)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ensemble"]["normalized"] is True


def test_invalid_config_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"experiment": "Sample", "ensemble": {"n": 3, "model": "truncated", "m": 9}}')
    assert main(["Sample", "--config", str(p)]) == 2
    assert "ensemble.m" in capsys.readouterr().err


def test_experiment_mismatch_exit_2(tmp_path):
    cfg = _config(tmp_path, "Sample")
    assert main(["Spectrum", "--config", str(cfg)]) == 2


def test_bad_seed_is_usage_error(tmp_path):
    cfg = _config(tmp_path, "Sample")
    with pytest.raises(SystemExit) as info:
        main(["Sample", "--config", str(cfg), "--seed", "-1"])
    assert info.value.code == 2


def test_solver_failure_exit_3(tmp_path, monkeypatch, capsys):
    def boom(H, *a, **k):
        raise SolverError("did not converge", seed=H.seed, stream_index=H.stream_index)
    monkeypatch.setattr(experiments, "eigendecompose", boom)
    cfg = _config(tmp_path, "Spectrum")
    assert main(["Spectrum", "--config", str(cfg), "--workers", "1"]) == 3
    assert "seed=11" in capsys.readouterr().err


def test_io_failure_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _config(tmp_path, "Sample")
    assert main(["Sample", "--config", str(cfg), "--out", str(blocker / "sub")]) == 4
    assert main(["Sample", "--config", str(tmp_path / "missing.json")]) == 4


def test_identity_failure_exit_1(tmp_path):
    cfg = _config(tmp_path, "IdentityCheck")
    doc = json.loads(cfg.read_text())
    doc["params"] = {"drift_tol": 1e-300}
    cfg.write_text(json.dumps(doc))
    assert main(["identity-check", "--config", str(cfg), "--workers", "1"]) == 1
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "failed"


def test_oracle_subcommand(capsys):
    assert main(["oracle", "distance", "3", "1", "8"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 3
    assert main(["oracle", "eig2", "0", "1", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == [-1.0, 1.0]
    assert main(["oracle", "gap-ratio", "equal", "--samples", "50"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 1.0
    assert main(["oracle", "distance", "9", "1", "2"]) == 2
