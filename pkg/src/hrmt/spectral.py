"""Eigendecomposition and resolvent evaluation for a single realization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .ensemble import Hamiltonian
from .errors import DomainError, SolverError


@dataclass(frozen=True)
class ComplexEnergy:
    """Spectral parameter ``z = E + i eta`` in the upper half-plane."""

    E: float
    eta: float

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta) and math.isfinite(self.E)):
            raise DomainError(f"need finite E and eta > 0, got E={self.E!r}, eta={self.eta!r}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    def __complex__(self):
        return self.z


Energy = Union[ComplexEnergy, complex]


def as_complex(z: Energy) -> complex:
    z = complex(z)
    if not z.imag > 0:
        raise DomainError(f"spectral parameter must lie in the upper half-plane, got {z}")
    return z


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Sorted eigenvalues and (optionally) the matching orthonormal eigenvectors.

    ``eigenvectors[:, j]`` belongs to ``eigenvalues[j]``.  ``size`` is the
    matrix dimension, which exceeds ``len(eigenvalues)`` for partial spectra
    computed on an energy range.
    """

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    size: int = 0
    energy_range: Optional[Tuple[float, float]] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.size == 0:
            object.__setattr__(self, "size", len(self.eigenvalues))
        for a in (self.eigenvalues, self.eigenvectors):
            if a is not None:
                a.flags.writeable = False

    @property
    def complete(self) -> bool:
        return self.energy_range is None

    def require_vectors(self):
        if self.eigenvectors is None:
            raise DomainError("eigenvectors were not computed for this spectrum")
        return self.eigenvectors

    def require_complete(self):
        if not self.complete:
            raise DomainError("operation needs the full spectrum, got a partial one")

    def covers(self, a: float, b: float) -> bool:
        if self.energy_range is None:
            return True
        lo, hi = self.energy_range
        return lo <= a and b <= hi


def _fix_signs(v: np.ndarray) -> np.ndarray:
    # first component that is not negligible is made positive
    big = np.abs(v) > 1e-12 * np.max(np.abs(v), axis=0, keepdims=True)
    first = np.argmax(big, axis=0)
    s = np.sign(v[first, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


def _block_eigh(a: np.ndarray, b: int, vectors: bool):
    """Eigenpairs of a block-diagonal matrix, one block at a time.

    Eigenvectors are supported on a single block exactly, with no roundoff
    leaking across blocks.
    """
    N = a.shape[0]
    k = N // b
    blocks = a.reshape(k, b, k, b)[np.arange(k), :, np.arange(k), :]
    if vectors:
        w, v = np.linalg.eigh(blocks)
        V = np.zeros((N, N))
        for j in range(k):
            V[j * b:(j + 1) * b, j * b:(j + 1) * b] = v[j]
        w = w.reshape(-1)
        order = np.argsort(w, kind="stable")
        return w[order], V[:, order]
    w = np.sort(np.linalg.eigvalsh(blocks).reshape(-1), kind="stable")
    return w, None


def eigendecompose(H, vectors: bool = True, energy_range=None, block_size: Optional[int] = None) -> SpectralData:
    """Dense symmetric eigensolve.

    ``energy_range=(a, b)`` restricts the output to eigenpairs in the
    half-open interval ``(a, b]`` (LAPACK ``syevr``); all other statistics
    need the full spectrum.  Truncated-model Hamiltonians are solved block by
    block (``block_size = 2**m``), which is both faster and exact about
    supports.
    """
    seed = getattr(H, "seed", None)
    if block_size is None and isinstance(H, Hamiltonian) and H.config is not None \
            and H.config.model == "truncated":
        block_size = 2 ** H.config.m
    a = np.asarray(H.matrix if isinstance(H, Hamiltonian) else H, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    if block_size is not None and (block_size < 1 or a.shape[0] % block_size):
        raise DomainError(f"block size {block_size} does not divide {a.shape[0]}")
    try:
        if block_size is not None and block_size < a.shape[0]:
            w, v = _block_eigh(a, block_size, vectors)
            erange = None
            if energy_range is not None:
                lo, hi = map(float, energy_range)
                keep = (w > lo) & (w <= hi)
                w = w[keep]
                v = v[:, keep] if v is not None else None
                erange = (lo, hi)
        elif energy_range is not None:
            lo, hi = map(float, energy_range)
            if not lo < hi:
                raise DomainError(f"empty energy range {energy_range}")
            w, v = scipy.linalg.eigh(a, subset_by_value=(lo, hi), driver="evr",
                                     check_finite=False)
            if not vectors:
                v = None
            erange = (lo, hi)
        elif vectors:
            w, v = np.linalg.eigh(a)
            erange = None
        else:
            w, v = np.linalg.eigvalsh(a), None
            erange = None
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"eigensolver did not converge (seed={seed}): {exc}", seed=seed,
                          stream_index=getattr(H, "stream_index", None)) from exc
    if v is not None and v.shape[1]:
        v = _fix_signs(v)
    return SpectralData(np.ascontiguousarray(w), v, a.shape[0], erange, seed)


# ---------------------------------------------------------------------------
# Resolvent entries
# ---------------------------------------------------------------------------

def _weights(sd: SpectralData, z: Energy, power: int = 1) -> np.ndarray:
    return 1.0 / (sd.eigenvalues - as_complex(z)) ** power


def green_function(sd: SpectralData, x: int, y: int, z: Energy) -> complex:
    """``G(x, y; z) = <delta_y, (H - z)^{-1} delta_x>`` for 1-based ``x, y``."""
    sd.require_complete()
    V = sd.require_vectors()
    _check_index(sd, x)
    _check_index(sd, y)
    return complex(np.sum(V[x - 1] * V[y - 1] * _weights(sd, z)))


def green_row(sd: SpectralData, x: int, z: Energy) -> np.ndarray:
    """``G(x, y; z)`` for all ``y`` as a complex vector (0-based in ``y``)."""
    sd.require_complete()
    V = sd.require_vectors()
    _check_index(sd, x)
    return V @ (V[x - 1] * _weights(sd, z))


def green_derivative(sd: SpectralData, x: int, y: int, z: Energy, order: int = 1) -> complex:
    """``d^k/dz^k G(x, y; z) = k! sum_j psi_j(x) psi_j(y) / (lambda_j - z)^{k+1}``."""
    sd.require_complete()
    V = sd.require_vectors()
    _check_index(sd, x)
    _check_index(sd, y)
    return complex(math.factorial(order) * np.sum(V[x - 1] * V[y - 1] * _weights(sd, z, order + 1)))


def resolvent_power(sd: SpectralData, z: Energy, power: int = 1) -> np.ndarray:
    """The full matrix ``(H - z)^{-power}``."""
    sd.require_complete()
    V = sd.require_vectors()
    return (V * _weights(sd, z, power)) @ V.T


def stieltjes(sd: SpectralData, z: Energy) -> complex:
    """Normalized trace ``S(z) = N^{-1} sum_j 1/(lambda_j - z)``."""
    sd.require_complete()
    return complex(np.mean(_weights(sd, z)))


def stieltjes_derivative(sd: SpectralData, z: Energy, order: int = 1) -> complex:
    sd.require_complete()
    return complex(math.factorial(order) * np.mean(_weights(sd, z, order + 1)))


def dos_measure(sd: SpectralData, interval: Sequence[float]) -> Tuple[int, float]:
    """Eigenvalue count in the closed interval ``[a, b]`` and that count over ``N``."""
    a, b = map(float, interval)
    if a > b:
        raise DomainError(f"interval endpoints out of order: {a} > {b}")
    if not sd.complete and not sd.covers(a, b):
        raise DomainError("interval not covered by the partial spectrum")
    lam = sd.eigenvalues
    count = int(np.searchsorted(lam, b, side="right") - np.searchsorted(lam, a, side="left"))
    return count, count / sd.size


def _check_index(sd: SpectralData, x: int) -> None:
    if not (1 <= x <= sd.size):
        raise DomainError(f"index {x} outside 1..{sd.size}")


def spectrum_rows(sd: SpectralData):
    """``(index, eigenvalue)`` pairs with 1-based index, for CSV export."""
    return [(j + 1, float(lam)) for j, lam in enumerate(sd.eigenvalues)]
