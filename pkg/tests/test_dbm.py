import math

import numpy as np
import pytest

from hrmt.dbm import (FlowConfig, burgers_drift_check, drift_identity_check, evolve, flow_time,
                      growth_exponent, martingale_qv_estimate, stability_experiment, theorem_shape,
                      ward_identity_check)
from hrmt.ensemble import EnsembleConfig, Hamiltonian, RngStream, goe_matrix
from hrmt.errors import DomainError, PrecisionError
from hrmt.spectral import eigendecompose


def test_drift_identity_trivial_case():
    res = drift_identity_check(np.zeros((1, 1)), 1j, 1, 1)
    assert res["lhs"] == pytest.approx(-2j)
    assert res["rhs"] == pytest.approx(-2j)


@pytest.mark.parametrize("N", [1, 3, 8])
def test_burgers_at_zero_matrix(N):
    res = burgers_drift_check(np.zeros((N, N)), 1j)
    assert res["rhs"] == pytest.approx(-1j - 1j / N)
    assert res["relative_error"] <= 1e-12


@pytest.mark.parametrize("N", [1, 2, 8, 32])
def test_identities_on_random_matrices(N):
    rng = np.random.default_rng(N + 100)
    for _ in range(5):
        H = goe_matrix(rng, N)
        z = complex(rng.uniform(-2, 2), 10 ** rng.uniform(-3, 0))
        x, y = (int(v) for v in rng.integers(1, N + 1, size=2))
        assert drift_identity_check(H, z, x, y)["relative_error"] <= 1e-8
        assert burgers_drift_check(H, z)["relative_error"] <= 1e-8
        assert ward_identity_check(eigendecompose(H), x, z) <= 1e-10


def test_identity_index_checked():
    with pytest.raises(DomainError):
        drift_identity_check(np.eye(2), 1j, 1, 3)
    with pytest.raises(DomainError):
        drift_identity_check(np.eye(2), -1j, 1, 1)


def test_evolve_zero_time_is_identity():
    H0 = Hamiltonian(goe_matrix(np.random.default_rng(0), 8))
    traj = evolve(FlowConfig(H0, 0.0), RngStream(0, 0))
    assert len(traj.matrices) == 1
    assert np.array_equal(traj.endpoint.matrix, H0.matrix)


def test_one_shot_increment_variance():
    N, t = 128, 0.5
    H0 = Hamiltonian(np.zeros((N, N)))
    W = evolve(FlowConfig(H0, t), RngStream(1, 0)).endpoint.matrix
    off = W[np.triu_indices(N, 1)]
    assert np.var(off) * N / t == pytest.approx(1.0, rel=0.05)
    assert np.var(np.diag(W)) * N / t == pytest.approx(2.0, rel=0.3)


def test_path_mode_is_reproducible_and_chained():
    H0 = Hamiltonian(np.zeros((16, 16)))
    cfg = FlowConfig(H0, 0.2, steps=10, mode="path")
    a = evolve(cfg, RngStream(2, 0))
    b = evolve(cfg, RngStream(2, 0))
    assert len(a.times) == 11 and a.times[-1] == pytest.approx(0.2)
    for Ha, Hb in zip(a.matrices, b.matrices):
        assert np.array_equal(Ha.matrix, Hb.matrix)


def test_flow_config_validation():
    H0 = Hamiltonian(np.zeros((2, 2)))
    with pytest.raises(DomainError):
        FlowConfig(H0, -1.0)
    with pytest.raises(DomainError):
        FlowConfig(H0, 1.0, mode="euler")


def test_theorem_shape_and_flow_time():
    assert theorem_shape(100, 0.5, 0.01) == pytest.approx(100 ** -0.25 * 3)
    assert flow_time(1024, 0.5) == pytest.approx(1024 ** -1.5)
    with pytest.raises(DomainError):
        flow_time(1024, 0.0)


def test_zero_flow_gives_zero_gaps():
    cfg = EnsembleConfig(n=5, model="rosenzweig_porter", t=0.0)
    res = stability_experiment(cfg, 0.5, [0.0 + 1j / 32], 4, master_seed=3, t=0.0)
    assert res["rows"][0]["mean_s_gap"] == 0.0
    assert res["rows"][0]["mean_g_gap"] == 0.0


def test_stability_rows_and_crude_bound():
    N = 64
    cfg = EnsembleConfig(n=6, model="rosenzweig_porter", t=0.0)
    zs = [complex(0.0, f / N) for f in (4, 1, 0.25)]
    res = stability_experiment(cfg, 0.5, zs, 8, master_seed=1)
    t = flow_time(N, 0.5)
    for row in res["rows"]:
        assert row["t"] == t
        assert row["crude_bound"] == pytest.approx(math.sqrt(t) / row["eta"] ** 2)
        assert 0 < row["mean_s_gap"] < row["crude_bound"]
    assert math.isfinite(res["growth_exponent"])


def test_growth_exponent_recovers_power_law():
    rows = [{"N": 10, "eta": e, "mean_s_gap": (1 / (10 * e)) ** 2.5} for e in (0.4, 0.1, 0.025)]
    assert growth_exponent(rows) == pytest.approx(2.5)


def test_martingale_qv():
    H0 = Hamiltonian(goe_matrix(np.random.default_rng(3), 32))
    traj = evolve(FlowConfig(H0, 0.05, steps=20, mode="path"), RngStream(4, 0))
    res = martingale_qv_estimate(traj, 0.1 + 0.2j)
    assert res["steps"] == 20 and res["dominator"] > 0 and res["realized"] >= 0
    short = evolve(FlowConfig(H0, 0.05, steps=3, mode="path"), RngStream(4, 0))
    with pytest.raises(PrecisionError):
        martingale_qv_estimate(short, 0.1 + 0.2j)
