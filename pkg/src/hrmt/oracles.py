"""Slow, literal reference computations used to check the fast paths.

Nothing here imports from the rest of the package: each oracle is written
from the defining formula so that agreement with the optimized code is
meaningful.
"""

import math

import numpy as np


def partitions(n):
    """The nested partitions ``P_0, ..., P_n`` of ``{1, ..., 2**n}`` as lists of sets."""
    N = 2 ** n
    out = []
    for r in range(n + 1):
        size = 2 ** r
        out.append([set(range(j * size + 1, (j + 1) * size + 1)) for j in range(N // size)])
    return out


def partition_distance_oracle(n, x, y):
    """Minimal ``r`` with ``x`` and ``y`` in a common member of ``P_r``."""
    if n > 8:
        raise ValueError("partition oracle is limited to n <= 8")
    for r, blocks in enumerate(partitions(n)):
        for block in blocks:
            if x in block and y in block:
                return r
    raise ValueError(f"indices {x}, {y} not in 1..{2 ** n}")


def eig2_oracle(a, b, d):
    """Eigenvalues of ``[[a, b], [b, d]]`` in ascending order."""
    mid = (a + d) / 2.0
    rad = math.sqrt(((a - d) / 2.0) ** 2 + b * b)
    return (mid - rad, mid + rad)


def variance_profile_oracle(n, c, normalized=True):
    """Entry variances summed level by level straight from the block definition."""
    N = 2 ** n
    P = partitions(n)
    S = np.zeros((N, N))
    for r in range(n + 1):
        weight = 2.0 ** (-(1 + c) * r)
        for x in range(1, N + 1):
            for y in range(1, N + 1):
                together = any(x in blk and y in blk for blk in P[r])
                if not together:
                    continue
                var_phi = 2.0 ** -r * (2.0 if x == y else 1.0)
                S[x - 1, y - 1] += weight * var_phi
    if normalized:
        S /= S[0].sum()
    return S


def resolvent_solve_oracle(H, x, y, z):
    """``<delta_y, (H - z)^{-1} delta_x>`` by a direct linear solve."""
    A = np.asarray(H, dtype=complex) - z * np.eye(len(H))
    e = np.zeros(len(H), dtype=complex)
    e[x - 1] = 1.0
    w = np.linalg.solve(A, e)
    return w[y - 1]


def drift_pair_sum_oracle(H, z, x, y):
    """Literal ``(1/N) sum_{u<=v} <d_y, R P_uv R P_uv R d_x>`` with explicit ``P_uv`` matrices."""
    H = np.asarray(H, dtype=float)
    N = len(H)
    R = np.linalg.inv(H - z * np.eye(N))
    total = 0j
    for u in range(N):
        for v in range(u, N):
            P = np.zeros((N, N))
            P[u, v] += 1.0
            P[v, u] += 1.0
            P /= math.sqrt(2.0 if u == v else 1.0)
            M = R @ P @ R @ P @ R
            total += M[y - 1, x - 1]
    return total / N


def poisson_sampler(rng, mean, size):
    """Poisson counts by inversion of the cumulative distribution."""
    u = rng.random(size)
    out = np.zeros(size, dtype=np.int64)
    for i, ui in enumerate(u):
        k, p = 0, math.exp(-mean)
        cdf = p
        while ui > cdf:
            k += 1
            p *= mean / k
            cdf += p
        out[i] = k
    return out


def _ratios(levels):
    s = np.diff(np.sort(levels))
    return np.minimum(s[:-1], s[1:]) / np.maximum(s[:-1], s[1:])


def reference_gap_ratio(distribution, samples, rng=None, goe_size=512):
    """Monte Carlo mean gap ratio of a reference process.

    ``distribution`` is ``"exponential"`` (i.i.d. exponential spacings, the
    Poisson fingerprint), ``"goe"`` (bulk of ``goe_size`` GOE matrices) or
    ``"equal"`` (arithmetic progression).
    """
    if samples < 10_000 and distribution != "equal":
        raise ValueError("reference gap ratios need at least 10^4 samples")
    rng = np.random.default_rng(0) if rng is None else rng
    if distribution == "equal":
        return float(np.mean(_ratios(np.arange(samples + 2, dtype=float))))
    if distribution == "exponential":
        levels = np.cumsum(rng.exponential(1.0, samples + 2))
        return float(np.mean(_ratios(levels)))
    if distribution == "goe":
        collected = []
        lo, hi = int(0.4 * goe_size), int(0.6 * goe_size)
        while sum(len(c) for c in collected) < samples:
            A = rng.standard_normal((goe_size, goe_size))
            lam = np.linalg.eigvalsh((A + A.T) / math.sqrt(2 * goe_size))
            collected.append(_ratios(lam[lo:hi]))
        return float(np.mean(np.concatenate(collected)))
    raise ValueError(f"unknown reference distribution {distribution!r}")


ORACLES = {
    "distance": partition_distance_oracle,
    "eig2": eig2_oracle,
    "gap-ratio": reference_gap_ratio,
    "variance-profile": variance_profile_oracle,
}


class OracleResult:
    """Oracle output with an echo of its inputs and a note on the method."""

    def __init__(self, name, inputs, value, method):
        self.name = name
        self.inputs = inputs
        self.value = value
        self.method = method

    def to_dict(self):
        return {"name": self.name, "inputs": self.inputs, "value": self.value, "method": self.method}


METHODS = {
    "distance": "literal nested partitions, first level with a common block",
    "eig2": "closed-form roots of the 2x2 characteristic polynomial",
    "gap-ratio": "Monte Carlo mean of min/max consecutive spacing ratios",
    "variance-profile": "term-by-term sum over levels and blocks",
}


def run_oracle(name, *args, **kwargs):
    fn = ORACLES[name]
    value = fn(*args, **kwargs)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    elif isinstance(value, tuple):
        value = list(value)
    return OracleResult(name, {"args": list(args), **kwargs}, value, METHODS[name])
