"""Hierarchical index space, variance profiles and random matrix models.

Indices are 1-based throughout the public API, matching the index set
``{1, ..., 2**n}``.  Internally arrays are 0-based; ``x - 1`` converts.

Models
------
ultrametric
    ``H = Z^-1 sum_{r=0}^{n} 2^{-(1+c) r / 2} Phi_{n,r}`` (``Z`` dropped when
    ``normalized`` is false).
truncated
    Same sum stopped at level ``m``, never normalized.
rosenzweig_porter
    ``V + sqrt(t) Phi_{n,n}`` with an i.i.d. diagonal potential ``V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Union

import numpy as np

from .errors import DomainError

MODELS = ("ultrametric", "truncated", "rosenzweig_porter")


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by ``(master_seed, stream_index)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    distinct index pairs give independent PCG64 generators and identical
    pairs reproduce bit-for-bit.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0 or v >= 2**64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def seed_sequence(self, *subkey: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.stream_index),) + tuple(subkey)
        )

    def generator(self, *subkey: int) -> np.random.Generator:
        """Fresh generator; ``subkey`` selects an independent sub-stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*subkey)))

    def derived_seed(self) -> int:
        """A 64-bit integer fingerprint of this stream (for manifests)."""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint64)[0])


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Index space and hierarchical distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexSpace:
    """The index set ``{1, ..., 2**n}`` with its ultrametric."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise DomainError(f"n must be a non-negative integer, got {self.n!r}")

    @property
    def size(self) -> int:
        return 1 << self.n

    def check(self, x: int) -> None:
        if not (1 <= x <= self.size):
            raise DomainError(f"index {x} outside 1..{self.size}")

    def block_of(self, x: int, r: int) -> int:
        """1-based label of the member of the level-``r`` partition containing ``x``."""
        return -(-x // (1 << r))

    def ball(self, x: int, m: int) -> np.ndarray:
        """0-based indices ``y - 1`` with ``d(x, y) <= m``."""
        self.check(x)
        b = 1 << m
        start = ((x - 1) // b) * b
        return np.arange(start, start + b)


def hier_distance(space: IndexSpace, x: int, y: int) -> int:
    """Smallest ``r`` such that ``x`` and ``y`` share a block of size ``2**r``."""
    space.check(x)
    space.check(y)
    return ((x - 1) ^ (y - 1)).bit_length()


def distance_matrix(n: int) -> np.ndarray:
    """All pairwise hierarchical distances as an ``int`` array (0-based rows)."""
    N = 1 << n
    i = np.arange(N)
    x = i[:, None] ^ i[None, :]
    d = np.zeros((N, N), dtype=np.int64)
    for r in range(n):
        d += (x >> r) > 0
    return d


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Density of the i.i.d. diagonal potential.

    ``kind`` is ``"uniform"`` (on ``[-halfwidth, halfwidth]``) or
    ``"gaussian"`` (centered, standard deviation ``sigma``).
    """

    kind: str = "uniform"
    halfwidth: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise DomainError(f"potential.kind must be 'uniform' or 'gaussian', got {self.kind!r}")
        if self.kind == "uniform" and not self.halfwidth > 0:
            raise DomainError("potential.halfwidth must be positive")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise DomainError("potential.sigma must be positive")

    @property
    def density_bound(self) -> float:
        """Sup of the density, i.e. the Lipschitz constant of the conditional law."""
        if self.kind == "uniform":
            return 1.0 / (2.0 * self.halfwidth)
        return 1.0 / (self.sigma * math.sqrt(2.0 * math.pi))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.where(np.abs(x) <= self.halfwidth, 1.0 / (2.0 * self.halfwidth), 0.0)
        return np.exp(-0.5 * (x / self.sigma) ** 2) / (self.sigma * math.sqrt(2.0 * math.pi))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-self.halfwidth, self.halfwidth, size)
        return rng.normal(0.0, self.sigma, size)

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "halfwidth": self.halfwidth}
        return {"kind": "gaussian", "sigma": self.sigma}


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    c: float = 1.0
    normalized: bool = True
    model: str = "ultrametric"
    m: Optional[int] = None
    t: Optional[float] = None
    potential: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise DomainError(f"n must be a non-negative integer, got {self.n!r}")
        if self.model not in MODELS:
            raise DomainError(f"model must be one of {MODELS}, got {self.model!r}")
        if not math.isfinite(self.c):
            raise DomainError("c must be finite")
        if self.model == "truncated":
            if self.m is None or not (0 <= self.m <= self.n):
                raise DomainError(f"m must satisfy 0 <= m <= n={self.n}, got {self.m!r}")
        if self.model == "rosenzweig_porter":
            if self.t is None or not (self.t >= 0 and math.isfinite(self.t)):
                raise DomainError(f"t must be a finite number >= 0, got {self.t!r}")

    @property
    def size(self) -> int:
        return 1 << self.n

    def replace(self, **changes) -> "EnsembleConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return EnsembleConfig(**d)

    def to_dict(self) -> dict:
        d = {"n": self.n, "c": self.c, "normalized": self.normalized, "model": self.model}
        if self.model == "truncated":
            d["m"] = self.m
        if self.model == "rosenzweig_porter":
            d["t"] = self.t
            d["potential"] = self.potential.to_dict()
        return d


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Dense real symmetric matrix tagged with how it was generated."""

    matrix: np.ndarray
    config: Optional[EnsembleConfig] = None
    seed: Optional[int] = None
    stream_index: Optional[int] = None

    def __post_init__(self):
        a = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"Hamiltonian must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("Hamiltonian has non-finite entries")
        if not np.array_equal(a, a.T):
            raise DomainError("Hamiltonian is not exactly symmetric")
        if a is self.matrix:
            a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "matrix", a)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


# ---------------------------------------------------------------------------
# Gaussian building blocks
# ---------------------------------------------------------------------------

def goe_blocks(rng: np.random.Generator, count: int, size: int, variance: float) -> np.ndarray:
    """``count`` independent symmetric Gaussian blocks of shape ``(size, size)``.

    Off-diagonal entries have ``variance``, diagonal entries ``2 * variance``.
    One draw per independent entry (upper triangle incl. diagonal), mirrored.
    """
    iu0, iu1 = np.triu_indices(size)
    vals = rng.standard_normal((count, iu0.size)) * math.sqrt(variance)
    vals[:, iu0 == iu1] *= math.sqrt(0.5)  # doubled by the mirror below
    U = np.zeros((count, size, size))
    U[:, iu0, iu1] = vals
    return U + np.swapaxes(U, 1, 2)


def goe_matrix(rng: np.random.Generator, N: int) -> np.ndarray:
    """Symmetric Gaussian matrix with entry variance ``(1 + delta_xy) / N``."""
    return goe_blocks(rng, 1, N, 1.0 / N)[0]


def _add_block_diagonal(H: np.ndarray, blocks: np.ndarray, weight: float) -> None:
    k, b, _ = blocks.shape
    view = H.reshape(k, b, k, b)
    idx = np.arange(k)
    view[idx, :, idx, :] += weight * blocks


def sample_phi(space: IndexSpace, r: int, rng) -> Hamiltonian:
    """Direct sum of ``2**(n-r)`` independent GOE blocks of size ``2**r``.

    Entry variance is ``2 * 2**-r`` on the diagonal, ``2**-r`` inside a block
    and exactly zero across blocks.
    """
    if not (0 <= r <= space.n):
        raise DomainError(f"r must satisfy 0 <= r <= n={space.n}, got {r}")
    g = _as_generator(rng)
    N = space.size
    H = np.zeros((N, N))
    _add_block_diagonal(H, goe_blocks(g, N >> r, 1 << r, 2.0 ** -r), 1.0)
    seed = rng.master_seed if isinstance(rng, RngStream) else None
    idx = rng.stream_index if isinstance(rng, RngStream) else None
    return Hamiltonian(H, None, seed, idx)


# ---------------------------------------------------------------------------
# Normalization and variance profile
# ---------------------------------------------------------------------------

def normalization_Z(n: int, c: float) -> float:
    """Exact constant making every row of the variance profile sum to one."""
    s = math.fsum(2.0 ** (-(1.0 + c) * r) * (1.0 + 2.0 ** -r) for r in range(n + 1))
    return math.sqrt(s)


def level_weights(n: int, c: float, top: Optional[int] = None) -> np.ndarray:
    """Amplitude ``2^{-(1+c) r / 2}`` of level ``r = 0..top``."""
    top = n if top is None else top
    return 2.0 ** (-(1.0 + c) * np.arange(top + 1) / 2.0)


def variance_profile(n: int, c: float, normalized: bool = True) -> np.ndarray:
    """Closed-form matrix of entry variances ``E|H(x,y)|^2`` of the ultrametric model."""
    r = np.arange(n + 1)
    per_level = 2.0 ** (-(2.0 + c) * r)
    # tail[k] = sum_{r >= k} per_level[r]
    tail = np.cumsum(per_level[::-1])[::-1]
    d = distance_matrix(n)
    S = tail[np.maximum(d, 1)] if n > 0 else np.zeros((1, 1))
    np.fill_diagonal(S, 2.0 * tail[0])
    if normalized:
        S = S / normalization_Z(n, c) ** 2
    return S


def spread_M(n: int, c: float, normalized: bool = True) -> float:
    """Inverse of the largest entry variance (always a diagonal entry)."""
    r = np.arange(n + 1)
    diag = 2.0 * math.fsum(2.0 ** (-(2.0 + c) * r))
    if normalized:
        diag /= normalization_Z(n, c) ** 2
    return 1.0 / diag


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def assemble(config: EnsembleConfig, rng) -> Hamiltonian:
    """Draw one realization of ``config``.

    Levels are drawn in increasing ``r`` from a single generator, so a given
    ``(config, RngStream)`` is bit-for-bit reproducible.
    """
    g = _as_generator(rng)
    n, N = config.n, config.size
    H = np.zeros((N, N))
    if config.model == "rosenzweig_porter":
        H[np.diag_indices(N)] = config.potential.sample(g, N)
        if config.t > 0:
            H += math.sqrt(config.t) * goe_blocks(g, 1, N, 1.0 / N)[0]
    else:
        top = config.m if config.model == "truncated" else n
        for r, w in enumerate(level_weights(n, config.c, top)):
            _add_block_diagonal(H, goe_blocks(g, N >> r, 1 << r, 2.0 ** -r), w)
        if config.model == "ultrametric" and config.normalized:
            H /= normalization_Z(n, config.c)
    seed = rng.master_seed if isinstance(rng, RngStream) else None
    idx = rng.stream_index if isinstance(rng, RngStream) else None
    return Hamiltonian(H, config, seed, idx)


def config_from_dict(d: dict) -> EnsembleConfig:
    """Build an :class:`EnsembleConfig` from its JSON mirror."""
    d = dict(d)
    pot = d.pop("potential", None)
    if isinstance(pot, dict):
        pot = PotentialSpec(**pot)
    elif pot is None:
        pot = PotentialSpec()
    return EnsembleConfig(potential=pot, **d)
