"""Monte Carlo estimators for local eigenvalue and eigenfunction statistics.

Per-realization values are produced by the single-spectrum functions here;
aggregation into a :class:`StatReport` always runs sequentially in
realization order with compensated summation so that results do not depend
on how the realizations were scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.stats

from .ensemble import IndexSpace
from .errors import DomainError, EstimatorError, PrecisionError
from .spectral import SpectralData, as_complex, dos_measure, stieltjes

BULK_FRACTION = 0.2


@dataclass(frozen=True)
class Window:
    """Spectral window ``[center - halfwidth, center + halfwidth]``.

    ``exponent`` records ``w`` when the window was built as
    ``halfwidth = N**-(1 - w)``.
    """

    center: float
    halfwidth: float
    exponent: Optional[float] = None

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise DomainError(f"window halfwidth must be positive, got {self.halfwidth}")

    @classmethod
    def mesoscopic(cls, center: float, N: int, w: float) -> "Window":
        return cls(center, float(N) ** -(1.0 - w), w)

    @property
    def lower(self) -> float:
        return self.center - self.halfwidth

    @property
    def upper(self) -> float:
        return self.center + self.halfwidth

    @property
    def length(self) -> float:
        return 2.0 * self.halfwidth

    def mask(self, values: np.ndarray) -> np.ndarray:
        return (values >= self.lower) & (values <= self.upper)


@dataclass(frozen=True)
class PointProcessSample:
    points: np.ndarray
    scale: float
    center: float

    def count(self, interval: Sequence[float]) -> int:
        a, b = interval
        return int(np.searchsorted(self.points, b, side="right")
                   - np.searchsorted(self.points, a, side="left"))


@dataclass
class StatReport:
    """Aggregate of one estimator over independent realizations."""

    name: str
    realizations: int
    master_seed: Optional[int]
    estimate: float
    stderr: float
    values: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    aux: dict = field(default_factory=dict)

    def summary(self) -> dict:
        d = {"name": self.name, "realizations": self.realizations,
             "master_seed": self.master_seed, "estimate": self.estimate,
             "stderr": self.stderr}
        for k, v in self.aux.items():
            d[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return d


@dataclass(frozen=True)
class CorrelatorReport:
    site: int
    radius: int
    window: Window
    inside_mass: float
    outside_mass: float

    @property
    def total_mass(self) -> float:
        return self.inside_mass + self.outside_mass


def mean_and_stderr(values: Iterable[float]):
    """Ordered compensated mean and standard error of the mean."""
    v = [float(a) for a in values]
    n = len(v)
    if n == 0:
        raise EstimatorError("no realizations to aggregate")
    mean = math.fsum(v) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum((a - mean) ** 2 for a in v) / (n - 1)
    return mean, math.sqrt(var / n)


def report(name: str, values, master_seed=None, **aux) -> StatReport:
    values = np.asarray(list(values), dtype=float)
    m, se = mean_and_stderr(values)
    return StatReport(name, len(values), master_seed, m, se, values, dict(aux))


# ---------------------------------------------------------------------------
# Point processes and counting
# ---------------------------------------------------------------------------

def rescale_spectrum(sd, E: float, scale: float) -> PointProcessSample:
    """Points ``scale * (lambda_j - E)`` in ascending order."""
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    lam = sd.eigenvalues if isinstance(sd, SpectralData) else np.asarray(sd, dtype=float)
    return PointProcessSample(np.sort(scale * (lam - E)), float(scale), float(E))


def counting_statistics(samples: Sequence[PointProcessSample], B: Sequence[float],
                        master_seed=None) -> StatReport:
    """Empirical law of ``#(points in B)`` across samples.

    The report estimate is the mean count; ``aux`` holds the PMF, the sample
    variance and the variance-to-mean ratio (1 for a Poisson law).
    """
    return count_report([s.count(B) for s in samples], B, master_seed)


def count_report(counts, B: Sequence[float], master_seed=None) -> StatReport:
    """Counting statistics from precomputed counts (see :func:`counting_statistics`)."""
    counts = np.asarray(counts, dtype=np.int64)
    if len(counts) < 2:
        raise EstimatorError("counting statistics need at least 2 samples")
    rep = report("count", counts, master_seed)
    var = math.fsum((c - rep.estimate) ** 2 for c in counts) / (len(counts) - 1)
    pmf = np.bincount(counts) / len(counts)
    ratio = var / rep.estimate if rep.estimate > 0 else float("nan")
    rep.aux.update(pmf=pmf, variance=var, var_mean_ratio=ratio,
                   interval=[float(B[0]), float(B[1])])
    return rep


def poisson_pmf(mean: float, kmax: int) -> np.ndarray:
    """Reference Poisson probabilities for ``k = 0..kmax``."""
    return scipy.stats.poisson.pmf(np.arange(kmax + 1), mean)


def density_of_states(sd: SpectralData, E: float) -> float:
    """Estimate of the DOS density at ``E`` from a mesoscopic window of width ``N**-0.5``."""
    half = 0.5 * sd.size ** -0.5
    _, frac = dos_measure(sd, (E - half, E + half))
    return frac / (2.0 * half)


# ---------------------------------------------------------------------------
# Gap ratio
# ---------------------------------------------------------------------------

def bulk_eigenvalues(eigenvalues: np.ndarray, fraction: float = BULK_FRACTION) -> np.ndarray:
    """The central ``fraction`` of the spectrum by rank."""
    N = len(eigenvalues)
    lo = int(math.floor((0.5 - fraction / 2.0) * N))
    hi = int(math.ceil((0.5 + fraction / 2.0) * N))
    return eigenvalues[lo:hi]


def gap_ratios(levels: np.ndarray) -> np.ndarray:
    s = np.diff(np.sort(levels))
    lo, hi = np.minimum(s[:-1], s[1:]), np.maximum(s[:-1], s[1:])
    with np.errstate(invalid="ignore"):
        r = lo / hi
    r[hi == 0] = 1.0
    return r


def gap_ratio(sd, window: Optional[Window] = None, fraction: float = BULK_FRACTION) -> float:
    """Mean of ``min(s_i, s_{i+1}) / max(s_i, s_{i+1})`` over consecutive spacings.

    Levels are those inside ``window``, or the central ``fraction`` of the
    spectrum when no window is given.
    """
    lam = sd.eigenvalues if isinstance(sd, SpectralData) else np.asarray(sd, dtype=float)
    levels = lam[window.mask(lam)] if window is not None else bulk_eigenvalues(lam, fraction)
    if len(levels) < 3:
        raise EstimatorError(f"gap ratio needs >= 3 levels in the window, got {len(levels)}")
    return float(np.mean(gap_ratios(levels)))


# ---------------------------------------------------------------------------
# Poisson kernel functional
# ---------------------------------------------------------------------------

def poisson_kernel(lam, z: complex):
    """``P_z(lambda) = Im 1/(lambda - z)``."""
    z = as_complex(z)
    return z.imag / ((np.asarray(lam) - z.real) ** 2 + z.imag ** 2)


def poisson_kernel_paths(sd: SpectralData, z: complex, E: float, N: Optional[int] = None):
    """Both evaluations of ``mu_N(P_z)``: direct kernel sum and ``Im S(E + z/N)``."""
    z = as_complex(z)
    N = sd.size if N is None else N
    direct = math.fsum(poisson_kernel(N * (sd.eigenvalues - E), z))
    via_trace = stieltjes(sd, E + z / N).imag * sd.size / N
    return direct, via_trace


def poisson_kernel_functional(sd: SpectralData, z: complex, E: float, N: Optional[int] = None) -> float:
    """``mu_N(P_z) = sum_j P_z(N (lambda_j - E))``."""
    return poisson_kernel_paths(sd, z, E, N)[0]


def characteristic_functional(values) -> tuple:
    """Monte Carlo estimate of ``E exp(-mu(P_z))`` from per-realization ``mu(P_z)``."""
    m, se = mean_and_stderr(np.exp(-np.asarray(values, dtype=float)))
    return m, se


# ---------------------------------------------------------------------------
# Eigenfunction correlator
# ---------------------------------------------------------------------------

def _window_vectors(sd: SpectralData, window: Window) -> np.ndarray:
    V = sd.require_vectors()
    if not sd.covers(window.lower, window.upper):
        raise DomainError("window not covered by the partial spectrum")
    return V[:, window.mask(sd.eigenvalues)]


def eigenfunction_correlator(sd: SpectralData, x: int, window: Window) -> np.ndarray:
    """``Q(x, y; W) = sum_{lambda in W} |psi(x) psi(y)|`` for every ``y`` (0-based)."""
    if not 1 <= x <= sd.size:
        raise DomainError(f"index {x} outside 1..{sd.size}")
    A = np.abs(_window_vectors(sd, window))
    return A @ A[x - 1]


def localization_mass(sd: SpectralData, space: IndexSpace, x: int, m: int,
                      window: Window) -> CorrelatorReport:
    """Correlator mass inside and outside the hierarchical ball ``{y : d(x,y) <= m}``."""
    if not 0 <= m <= space.n:
        raise DomainError(f"ball radius must satisfy 0 <= m <= n={space.n}, got {m}")
    Q = eigenfunction_correlator(sd, x, window)
    inside = np.zeros(len(Q), dtype=bool)
    inside[space.ball(x, m)] = True
    return CorrelatorReport(x, m, window, math.fsum(Q[inside]), math.fsum(Q[~inside]))


def correlator_green_bound_check(sd: SpectralData, x: int, Y, window: Window, eta: float,
                                 quadrature_points: int) -> dict:
    """Compare correlator mass on ``Y`` with the integrated Green function bound.

    ``rhs = (2/pi) sum_Y int_W |Im G(x,y;E+i eta)| dE + log N / N^w`` with the
    integral by composite trapezoid on ``quadrature_points`` uniform nodes.
    """
    sd.require_complete()
    V = sd.require_vectors()
    if window.exponent is None:
        raise DomainError("window must carry its exponent w")
    if not eta > 0:
        raise DomainError("eta must be positive")
    Y = np.asarray(sorted(Y), dtype=np.int64) - 1
    if quadrature_points < 2 or window.length / (quadrature_points - 1) > eta / 4.0:
        raise PrecisionError(
            f"trapezoid spacing {window.length / max(quadrature_points - 1, 1):.3e} exceeds eta/4={eta / 4:.3e}"
        )
    N = sd.size
    lhs = float(np.sum(eigenfunction_correlator(sd, x, window)[Y])) if len(Y) else 0.0
    if len(Y):
        grid = np.linspace(window.lower, window.upper, quadrature_points)
        lam = sd.eigenvalues
        amp = V[x - 1][:, None] * V[Y].T                                 # (N_lambda, |Y|)
        kern = eta / ((lam[None, :] - grid[:, None]) ** 2 + eta ** 2)    # (grid, N_lambda)
        img = np.abs(kern @ amp)                                         # |Im G| on grid
        integral = float(np.sum(scipy.integrate.trapezoid(img, grid, axis=0)))
    else:
        integral = 0.0
    rhs = 2.0 / math.pi * integral + math.log(N) / N ** window.exponent
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs)}


# ---------------------------------------------------------------------------
# Wegner / Minami / spectral averaging
# ---------------------------------------------------------------------------

def _intervals(intervals) -> List[tuple]:
    arr = np.asarray(intervals, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    widths = arr[:, 1] - arr[:, 0]
    if np.any(widths <= 0) or not np.allclose(widths, widths[0], rtol=1e-9, atol=0):
        raise DomainError("intervals must be non-degenerate translates of one width")
    return [tuple(i) for i in arr]


def wegner_minami_values(sd, intervals) -> tuple:
    """Per-realization Wegner and Minami ratios averaged over equal-width translates."""
    lam = sd.eigenvalues if isinstance(sd, SpectralData) else np.asarray(sd, dtype=float)
    N = sd.size if isinstance(sd, SpectralData) else len(lam)
    ivs = _intervals(intervals)
    width = ivs[0][1] - ivs[0][0]
    arr = np.asarray(ivs)
    counts = (np.searchsorted(lam, arr[:, 1], side="right")
              - np.searchsorted(lam, arr[:, 0], side="left")).astype(float)
    nu = counts / N
    wegner = math.fsum(nu / width) / len(ivs)
    minami = math.fsum(nu * (nu - 1.0 / N) / width ** 2) / len(ivs)
    return wegner, minami


def wegner_minami_statistics(realizations, intervals, master_seed=None):
    """``E nu(I)/|I|`` and ``E nu(I)(nu(I) - 1/N)/|I|^2`` over realizations.

    ``intervals`` is one interval or several translates of equal width; each
    realization contributes the average over the translates.
    """
    realizations = list(realizations)
    if len(realizations) < 2:
        raise EstimatorError("Wegner/Minami statistics need at least 2 realizations")
    vals = [wegner_minami_values(sd, intervals) for sd in realizations]
    width = _intervals(intervals)[0]
    width = width[1] - width[0]
    w = report("wegner_ratio", [v[0] for v in vals], master_seed, interval_length=width)
    m = report("minami_ratio", [v[1] for v in vals], master_seed, interval_length=width)
    return w, m


def spectral_averaging_value(sd: SpectralData, x: int, intervals) -> float:
    """``sum_y |mu_xy|(I) / (N |I|)`` for one realization, averaged over translates."""
    V = sd.require_vectors()
    sd.require_complete()
    if not 1 <= x <= sd.size:
        raise DomainError(f"index {x} outside 1..{sd.size}")
    ivs = _intervals(intervals)
    width = ivs[0][1] - ivs[0][0]
    A = np.abs(V)
    l1 = A.sum(axis=0)
    per = A[x - 1] * l1
    lam = sd.eigenvalues
    vals = [math.fsum(per[(lam >= a) & (lam <= b)]) for a, b in ivs]
    return math.fsum(vals) / len(vals) / (sd.size * width)


def spectral_averaging_statistic(realizations, x: int, intervals, master_seed=None) -> StatReport:
    """``E sum_y |mu_xy|(I) / (N |I|)`` over realizations."""
    realizations = list(realizations)
    if len(realizations) < 2:
        raise EstimatorError("spectral averaging statistic needs at least 2 realizations")
    return report("spectral_averaging", [spectral_averaging_value(sd, x, intervals) for sd in realizations],
                  master_seed)
