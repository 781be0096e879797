import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import hrmt.spectral as spectral
from hrmt.ensemble import EnsembleConfig, Hamiltonian, RngStream, assemble, goe_matrix
from hrmt.errors import DomainError, SolverError
from hrmt.oracles import eig2_oracle, resolvent_solve_oracle
from hrmt.spectral import (ComplexEnergy, dos_measure, eigendecompose, green_derivative, green_function,
                           green_row, resolvent_power, spectrum_rows, stieltjes, stieltjes_derivative)


@pytest.fixture(scope="module")
def goe():
    H = goe_matrix(np.random.default_rng(1), 40)
    return H, eigendecompose(H)


def test_reconstruction_and_orthonormality(goe):
    H, sd = goe
    V, lam = sd.eigenvectors, sd.eigenvalues
    np.testing.assert_allclose(V @ np.diag(lam) @ V.T, H, atol=1e-12)
    np.testing.assert_allclose(V.T @ V, np.eye(40), atol=1e-12)
    assert np.all(np.diff(lam) >= 0)


def test_sign_convention_is_deterministic(goe):
    H, sd = goe
    again = eigendecompose(H)
    assert np.array_equal(sd.eigenvectors, again.eigenvectors)


def test_outputs_are_immutable(goe):
    _, sd = goe
    with pytest.raises(ValueError):
        sd.eigenvalues[0] = 0.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_two_by_two_against_oracle(a, b, d):
    lam = eigendecompose(np.array([[a, b], [b, d]]), vectors=False).eigenvalues
    assert lam == pytest.approx(eig2_oracle(a, b, d), abs=1e-12)


def test_green_function_matches_solve(goe):
    H, sd = goe
    z = ComplexEnergy(0.3, 0.01)
    for x, y in [(1, 1), (3, 17), (40, 2)]:
        ref = resolvent_solve_oracle(H, x, y, z.z)
        assert abs(green_function(sd, x, y, z) - ref) <= 1e-10 * abs(ref)
    row = green_row(sd, 5, z)
    assert abs(row[16] - resolvent_solve_oracle(H, 5, 17, z.z)) <= 1e-10 * abs(row[16])


def test_derivatives_match_resolvent_powers(goe):
    H, sd = goe
    z = 0.1 + 0.05j
    R = np.linalg.inv(H - z * np.eye(40))
    assert green_derivative(sd, 2, 7, z, 1) == pytest.approx((R @ R)[1, 6], rel=1e-9)
    assert green_derivative(sd, 2, 7, z, 2) == pytest.approx(2 * (R @ R @ R)[1, 6], rel=1e-9)
    np.testing.assert_allclose(resolvent_power(sd, z, 2), R @ R, rtol=1e-9, atol=1e-12)
    assert stieltjes(sd, z) == pytest.approx(np.trace(R) / 40, rel=1e-12)
    assert stieltjes_derivative(sd, z) == pytest.approx(np.trace(R @ R) / 40, rel=1e-10)


def test_lower_half_plane_rejected(goe):
    _, sd = goe
    with pytest.raises(DomainError):
        stieltjes(sd, 0.5 - 0.1j)
    with pytest.raises(DomainError):
        ComplexEnergy(0.0, 0.0)


def test_index_range_checked(goe):
    _, sd = goe
    with pytest.raises(DomainError):
        green_function(sd, 0, 1, 1j)
    with pytest.raises(DomainError):
        green_function(sd, 1, 41, 1j)


def test_energy_range_subset(goe):
    H, sd = goe
    part = eigendecompose(H, energy_range=(-0.5, 0.5))
    full = sd.eigenvalues[(sd.eigenvalues > -0.5) & (sd.eigenvalues <= 0.5)]
    np.testing.assert_allclose(part.eigenvalues, full, atol=1e-12)
    assert part.size == 40 and not part.complete
    with pytest.raises(DomainError):
        stieltjes(part, 1j)
    with pytest.raises(DomainError):
        dos_measure(part, (-1.0, 1.0))


def test_truncated_solved_blockwise_exactly():
    cfg = EnsembleConfig(n=6, c=1.0, model="truncated", m=3)
    H = assemble(cfg, RngStream(0, 0))
    sd = eigendecompose(H)
    dense = np.linalg.eigvalsh(H.matrix)
    np.testing.assert_allclose(sd.eigenvalues, dense, atol=1e-12)
    V = sd.eigenvectors
    for j in range(V.shape[1]):
        support = np.flatnonzero(V[:, j])
        assert support.min() // 8 == support.max() // 8
    np.testing.assert_allclose(V @ np.diag(sd.eigenvalues) @ V.T, H.matrix, atol=1e-12)


def test_dos_measure_closed_interval():
    sd = eigendecompose(np.diag([0.0, 1.0, 2.0, 3.0]), vectors=False)
    assert dos_measure(sd, (1.0, 2.0)) == (2, 0.5)
    assert dos_measure(sd, (4.0, 5.0)) == (0, 0.0)
    with pytest.raises(DomainError):
        dos_measure(sd, (2.0, 1.0))


def test_spectrum_rows_one_based():
    sd = eigendecompose(np.diag([2.0, 1.0]), vectors=False)
    assert [tuple(r) for r in spectrum_rows(sd)] == [(1, 1.0), (2, 2.0)]


def test_non_finite_rejected():
    with pytest.raises(DomainError):
        eigendecompose(np.array([[np.inf]]))


def test_solver_failure_carries_seed(monkeypatch):
    def boom(a):
        raise np.linalg.LinAlgError("no convergence")
    monkeypatch.setattr(spectral.np.linalg, "eigh", boom)
    H = Hamiltonian(np.eye(3), seed=77, stream_index=4)
    with pytest.raises(SolverError) as info:
        eigendecompose(H)
    assert info.value.seed == 77 and info.value.stream_index == 4
    assert "77" in str(info.value)
