import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hrmt.ensemble import (EnsembleConfig, Hamiltonian, IndexSpace, PotentialSpec, RngStream, assemble,
                           distance_matrix, goe_blocks, hier_distance, normalization_Z, sample_phi,
                           spread_M, variance_profile)
from hrmt.errors import DomainError
from hrmt.oracles import variance_profile_oracle


# --- streams ---------------------------------------------------------------

def test_stream_reproducible_and_independent():
    a = RngStream(42, 3).generator().standard_normal(5)
    b = RngStream(42, 3).generator().standard_normal(5)
    c = RngStream(42, 4).generator().standard_normal(5)
    d = RngStream(42, 3).generator(1).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


@pytest.mark.parametrize("bad", [-1, 2 ** 64, 1.5])
def test_stream_rejects_bad_seed(bad):
    with pytest.raises(DomainError):
        RngStream(bad, 0)


# --- index space -------------------------------------------------------------

@given(st.integers(0, 7).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, 2 ** n), st.integers(1, 2 ** n), st.integers(1, 2 ** n))))
def test_distance_is_an_ultrametric(args):
    n, x, y, z = args
    s = IndexSpace(n)
    dxy, dyz, dxz = hier_distance(s, x, y), hier_distance(s, y, z), hier_distance(s, x, z)
    assert dxy == hier_distance(s, y, x)
    assert (dxy == 0) == (x == y)
    assert dxz <= max(dxy, dyz)
    assert 0 <= dxy <= n


@pytest.mark.parametrize("n,x,y,d", [(3, 1, 8, 3), (3, 5, 6, 1), (3, 3, 4, 1), (3, 4, 5, 3), (0, 1, 1, 0)])
def test_distance_examples(n, x, y, d):
    assert hier_distance(IndexSpace(n), x, y) == d


def test_distance_out_of_range():
    with pytest.raises(DomainError):
        hier_distance(IndexSpace(3), 0, 2)
    with pytest.raises(DomainError):
        hier_distance(IndexSpace(3), 1, 9)


def test_distance_matrix_agrees_with_scalar():
    s = IndexSpace(5)
    D = distance_matrix(5)
    for x in range(1, 33):
        for y in range(1, 33):
            assert D[x - 1, y - 1] == hier_distance(s, x, y)


@given(st.integers(0, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, 2 ** n), st.integers(0, n))))
def test_ball_is_the_distance_ball(args):
    n, x, m = args
    s = IndexSpace(n)
    ball = set(s.ball(x, m).tolist())
    assert ball == {y - 1 for y in range(1, s.size + 1) if hier_distance(s, x, y) <= m}


# --- variance profile ----------------------------------------------------------

@pytest.mark.parametrize("n", range(0, 11))
@pytest.mark.parametrize("c", [-1.5, -0.5, 0.5, 1.0, 1.5])
def test_profile_rows_sum_to_one(n, c):
    S = variance_profile(n, c)
    np.testing.assert_allclose(S.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("n", [0, 3, 6, 9, 10])
def test_profile_is_positive_semidefinite(n):
    for c in (-1.5, 1.0):
        assert np.linalg.eigvalsh(variance_profile(n, c)).min() >= -1e-10


def test_spread_constant_closed_form():
    # n=1, c=1: diagonal variance 2(1 + 1/8) / (1 + 1/4 * 3/2)
    assert spread_M(1, 1.0) == pytest.approx(float(Fraction(19, 18)), rel=1e-14)
    for n in range(6):
        assert spread_M(n, 0.5) == pytest.approx(1.0 / variance_profile(n, 0.5).max(), rel=1e-13)


def test_normalization_matches_oracle_row_sum():
    for n in range(5):
        for c in (-1.0, 0.3, 2.0):
            raw = variance_profile_oracle(n, c, normalized=False)
            assert normalization_Z(n, c) ** 2 == pytest.approx(raw[0].sum(), rel=1e-13)


# --- sampling ---------------------------------------------------------------

@pytest.mark.parametrize("r", range(0, 6))
def test_phi_zero_pattern_exact(r):
    space = IndexSpace(5)
    Phi = sample_phi(space, r, np.random.default_rng(r)).matrix
    D = distance_matrix(5)
    assert np.all(Phi[D > r] == 0.0)
    assert np.all(Phi[D <= r] != 0.0)
    assert np.array_equal(Phi, Phi.T)


def test_phi_entry_variances():
    rng = np.random.default_rng(9)
    blocks = goe_blocks(rng, 20_000, 4, 0.25)
    diag = blocks[:, 0, 0]
    off = blocks[:, 0, 1]
    assert np.var(diag) == pytest.approx(0.5, rel=0.05)
    assert np.var(off) == pytest.approx(0.25, rel=0.05)


def test_sample_phi_rejects_bad_level():
    with pytest.raises(DomainError):
        sample_phi(IndexSpace(3), 4, np.random.default_rng(0))


def test_assemble_reproducible():
    cfg = EnsembleConfig(n=5, c=0.5)
    a = assemble(cfg, RngStream(1, 2))
    b = assemble(cfg, RngStream(1, 2))
    assert np.array_equal(a.matrix, b.matrix)
    assert a.seed == 1 and a.stream_index == 2


def test_truncated_shares_lower_levels_and_is_block_diagonal():
    n, m, c = 6, 3, 1.0
    full = assemble(EnsembleConfig(n=n, c=c, normalized=False), RngStream(5, 0)).matrix
    trunc = assemble(EnsembleConfig(n=n, c=c, model="truncated", m=m), RngStream(5, 0)).matrix
    D = distance_matrix(n)
    assert np.all(trunc[D > m] == 0.0)
    # levels above m only add to the full matrix; on d > m the two differ by those levels alone
    assert not np.array_equal(full, trunc)
    top = assemble(EnsembleConfig(n=n, c=c, model="truncated", m=n), RngStream(5, 0)).matrix
    assert np.array_equal(top, full)


def test_normalized_is_scaled_unnormalized():
    a = assemble(EnsembleConfig(n=4, c=0.7), RngStream(3, 1)).matrix
    b = assemble(EnsembleConfig(n=4, c=0.7, normalized=False), RngStream(3, 1)).matrix
    np.testing.assert_allclose(a * normalization_Z(4, 0.7), b, rtol=1e-15)


def test_rosenzweig_porter_at_zero_time_is_diagonal_potential():
    cfg = EnsembleConfig(n=6, model="rosenzweig_porter", t=0.0)
    H = assemble(cfg, RngStream(0, 0)).matrix
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    assert np.all(np.abs(np.diag(H)) <= 1.0)


def test_rosenzweig_porter_offdiagonal_variance():
    N = 256
    t = 0.3
    H = assemble(EnsembleConfig(n=8, model="rosenzweig_porter", t=t), RngStream(0, 0)).matrix
    off = H[np.triu_indices(N, 1)]
    assert np.var(off) * N / t == pytest.approx(1.0, rel=0.05)


def test_sampled_entry_variances_match_profile():
    # 10^5 independent draws of the normalized ultrametric matrix at n=2
    cfg = EnsembleConfig(n=2, c=1.0)
    rng = np.random.default_rng(2024)
    draws = 100_000
    acc = np.zeros((4, 4))
    acc2 = np.zeros((4, 4))
    for _ in range(draws):
        sq = assemble(cfg, rng).matrix ** 2
        acc += sq
        acc2 += sq ** 2
    mean = acc / draws
    se = np.sqrt((acc2 / draws - mean ** 2) / draws)
    assert np.all(np.abs(mean - variance_profile(2, 1.0)) <= 4 * se)


# --- validation -------------------------------------------------------------

@pytest.mark.parametrize("kw,field", [
    (dict(n=-1), "n"), (dict(n=3, model="truncated", m=4), "m"), (dict(n=3, model="truncated"), "m"),
    (dict(n=3, model="rosenzweig_porter"), "t"), (dict(n=3, model="rosenzweig_porter", t=-1.0), "t"),
    (dict(n=3, model="nope"), "model"), (dict(n=3, c=float("inf")), "c"),
])
def test_config_errors_name_the_field(kw, field):
    with pytest.raises(DomainError, match=field):
        EnsembleConfig(**kw)


def test_potential_validation_and_bound():
    assert PotentialSpec().density_bound == 0.5
    assert PotentialSpec("gaussian", sigma=2.0).density_bound == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)))
    with pytest.raises(DomainError):
        PotentialSpec("cauchy")
    with pytest.raises(DomainError):
        PotentialSpec(halfwidth=0.0)


def test_hamiltonian_is_read_only_and_checked():
    H = Hamiltonian(np.eye(3))
    with pytest.raises(ValueError):
        H.matrix[0, 0] = 2.0
    with pytest.raises(DomainError):
        Hamiltonian(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(DomainError):
        Hamiltonian(np.array([[np.nan]]))
