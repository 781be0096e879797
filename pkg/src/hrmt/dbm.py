"""Matrix-level Dyson Brownian motion and the algebra of its resolvent flow.

The flow is ``H_t = H_0 + Phi_t`` where ``Phi_t`` has independent entries
``sqrt((1 + delta_xy) / N) B_xy(t)``.  Because the increments are Gaussian
the endpoint law is sampled exactly in one shot; path mode chains exact
Gaussian increments on a time grid.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .ensemble import EnsembleConfig, Hamiltonian, RngStream, assemble, goe_matrix, _as_generator
from .errors import DomainError, PrecisionError
from .local_stats import mean_and_stderr
from .spectral import (ComplexEnergy, SpectralData, as_complex, eigendecompose, green_row,
                       stieltjes)


@dataclass(frozen=True)
class FlowConfig:
    initial: Hamiltonian
    t_final: float
    steps: int = 1
    mode: str = "one_shot"

    def __post_init__(self):
        if not (self.t_final >= 0 and math.isfinite(self.t_final)):
            raise DomainError(f"t_final must be finite and >= 0, got {self.t_final}")
        if self.mode not in ("one_shot", "path"):
            raise DomainError(f"mode must be 'one_shot' or 'path', got {self.mode!r}")
        if self.mode == "path" and self.steps < 1:
            raise DomainError("path mode needs steps >= 1")


@dataclass(frozen=True)
class FlowTrajectory:
    times: np.ndarray
    matrices: List[Hamiltonian]

    @property
    def endpoint(self) -> Hamiltonian:
        return self.matrices[-1]


@dataclass(frozen=True)
class StabilityGap:
    z: ComplexEnergy
    t: float
    s_gap: float
    g_gap: float
    crude_bound: float


def evolve(config: FlowConfig, rng) -> FlowTrajectory:
    H0 = config.initial
    if config.t_final == 0:
        return FlowTrajectory(np.array([0.0]), [H0])
    g = _as_generator(rng)
    N = H0.size
    if config.mode == "one_shot":
        Ht = H0.matrix + math.sqrt(config.t_final) * goe_matrix(g, N)
        return FlowTrajectory(np.array([0.0, config.t_final]),
                              [H0, Hamiltonian(Ht, H0.config, H0.seed, H0.stream_index)])
    times = np.linspace(0.0, config.t_final, config.steps + 1)
    mats = [H0]
    H = H0.matrix.copy()
    for dt in np.diff(times):
        H = H + math.sqrt(dt) * goe_matrix(g, N)
        mats.append(Hamiltonian(H, H0.config, H0.seed, H0.stream_index))
    return FlowTrajectory(times, mats)


# ---------------------------------------------------------------------------
# Exact identities
# ---------------------------------------------------------------------------

def _resolvent(H, z: complex) -> np.ndarray:
    a = np.asarray(H.matrix if isinstance(H, Hamiltonian) else H, dtype=np.float64)
    return np.linalg.inv(a - z * np.eye(a.shape[0]))


def _pair_sum(R: np.ndarray, x: int, y: int) -> complex:
    """``sum_{u<=v} <d_y, R P_uv R P_uv R d_x>`` with 0-based ``x, y``.

    For ``u < v`` the summand expands to
    ``a_u R_uv b_v + a_v R_uv b_u + a_u D_v b_u + a_v D_u b_v`` with
    ``a = R[y, :]``, ``b = R[:, x]``, ``D = diag R``; for ``u == v`` it is
    ``2 a_u D_u b_u``.
    """
    a, b, D = R[y, :], R[:, x], np.diag(R)
    upper = np.triu(np.ones(R.shape, dtype=bool), 1)
    terms = (np.outer(a, b) + np.outer(b, a)) * R + np.outer(a * b, D) + np.outer(D, a * b)
    return complex(np.sum(terms[upper]) + 2.0 * np.sum(a * D * b))


def _relative(lhs: complex, rhs: complex) -> float:
    scale = max(abs(rhs), abs(lhs))
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


def drift_identity_check(H, z, x: int, y: int) -> dict:
    """Ito drift of ``G_t(x, y; z)`` against ``S dG/dz + (1/2N) d^2G/dz^2``."""
    z = as_complex(z)
    R = _resolvent(H, z)
    N = R.shape[0]
    _check(N, x, y)
    lhs = _pair_sum(R, x - 1, y - 1) / N
    S = np.trace(R) / N
    R2 = R @ R
    R3 = R2 @ R
    rhs = S * R2[y - 1, x - 1] + R3[y - 1, x - 1] / N
    return {"lhs": complex(lhs), "rhs": complex(rhs), "relative_error": _relative(lhs, rhs)}


def burgers_drift_check(H, z) -> dict:
    """Diagonal average of the drift identity against ``S S' + S''/(2N)``."""
    z = as_complex(z)
    R = _resolvent(H, z)
    N = R.shape[0]
    acc = [(_pair_sum(R, x, x) / N) for x in range(N)]
    lhs = complex(math.fsum(a.real for a in acc), math.fsum(a.imag for a in acc)) / N
    S = np.trace(R) / N
    dS = np.trace(R @ R) / N
    d2S = 2.0 * np.trace(R @ R @ R) / N
    rhs = S * dS + d2S / (2.0 * N)
    return {"lhs": complex(lhs), "rhs": complex(rhs), "relative_error": _relative(lhs, complex(rhs))}


def ward_identity_check(sd: SpectralData, x: int, z) -> float:
    """Relative gap in ``sum_u |G(x,u;z)|^2 = Im G(x,x;z) / eta``."""
    z = as_complex(z)
    row = green_row(sd, x, z)
    lhs = float(np.sum(np.abs(row) ** 2))
    rhs = row[x - 1].imag / z.imag
    return abs(lhs - rhs) / abs(rhs)


def _check(N, *idx):
    for i in idx:
        if not 1 <= i <= N:
            raise DomainError(f"index {i} outside 1..{N}")


# ---------------------------------------------------------------------------
# Stability experiment
# ---------------------------------------------------------------------------

def theorem_shape(N: int, c_flow: float, eta: float) -> float:
    """``N^{-c/2} (1 + 1/(N eta) + 1/(N eta)^3)``."""
    a = 1.0 / (N * eta)
    return N ** (-c_flow / 2.0) * (1.0 + a + a ** 3)


def flow_time(N: int, c_flow: float) -> float:
    if not c_flow > 0:
        raise DomainError(f"c_flow must be positive, got {c_flow}")
    return float(N) ** -(1.0 + c_flow)


def stability_gaps(sd0: SpectralData, sdt: SpectralData, t: float, zs: Sequence[ComplexEnergy],
                   x: int = 1, with_green: bool = True) -> List[StabilityGap]:
    out = []
    N = sd0.size
    for z in zs:
        s_gap = abs(stieltjes(sdt, z) - stieltjes(sd0, z))
        if with_green:
            g_gap = float(np.sum(np.abs(green_row(sdt, x, z) - green_row(sd0, x, z)))) / N
        else:
            g_gap = float("nan")
        out.append(StabilityGap(z, t, float(s_gap), g_gap, math.sqrt(t) / z.eta ** 2))
    return out


def stability_realization(config: EnsembleConfig, t: float, zs: Sequence[ComplexEnergy],
                          stream: RngStream, x: int = 1, with_green: bool = True) -> List[StabilityGap]:
    """One realization: ``H_0`` from ``config`` (sub-stream 0), flow noise from sub-stream 1."""
    if t < 0:
        raise DomainError(f"flow time must be >= 0, got {t}")
    H0 = assemble(config, stream.generator(0))
    H0 = Hamiltonian(H0.matrix, config, stream.master_seed, stream.stream_index)
    traj = evolve(FlowConfig(H0, t), stream.generator(1))
    sd0 = eigendecompose(H0, vectors=with_green)
    sdt = eigendecompose(traj.endpoint, vectors=with_green) if t > 0 else sd0
    return stability_gaps(sd0, sdt, t, zs, x, with_green)


def stability_experiment(config: EnsembleConfig, c_flow: float, zs, realizations: int,
                         master_seed: int, x: int = 1, t: Optional[float] = None,
                         with_green: bool = True, mapper: Callable = map) -> dict:
    """Mean stability gaps over realizations, per spectral parameter.

    ``t`` defaults to ``N**-(1 + c_flow)``; ``t = 0`` is accepted and gives
    identically zero gaps.  ``mapper`` may be any order-preserving map.
    """
    N = config.size
    zs = [z if isinstance(z, ComplexEnergy) else ComplexEnergy(complex(z).real, complex(z).imag) for z in zs]
    t = flow_time(N, c_flow) if t is None else float(t)
    if t < 0:
        raise DomainError(f"flow time must be >= 0, got {t}")
    streams = [RngStream(master_seed, k) for k in range(realizations)]
    task = functools.partial(stability_realization, config, t, zs, x=x, with_green=with_green)
    per = list(mapper(task, streams))
    return summarize_stability(per, N, c_flow, t, zs)


def summarize_stability(per: Sequence[Sequence[StabilityGap]], N: int, c_flow: float, t: float,
                        zs: Sequence[ComplexEnergy]) -> dict:
    rows = []
    for j, z in enumerate(zs):
        s_mean, s_se = mean_and_stderr(r[j].s_gap for r in per)
        g_vals = [r[j].g_gap for r in per]
        g_mean, g_se = mean_and_stderr(g_vals) if not any(math.isnan(g) for g in g_vals) \
            else (float("nan"), float("nan"))
        shape = theorem_shape(N, c_flow, z.eta)
        crude = math.sqrt(t) / z.eta ** 2
        s_arr = np.array([r[j].s_gap for r in per])
        rows.append({
            "N": N, "c_flow": c_flow, "eta": z.eta, "E": z.E, "t": t,
            "mean_s_gap": s_mean, "stderr": s_se, "mean_g_gap": g_mean, "g_stderr": g_se,
            "crude_bound": crude, "theorem_shape": shape,
            "ratio_to_shape": s_mean / shape, "ratio_to_crude": s_mean / crude if crude > 0 else float("nan"),
            "s_gap_q10": float(np.quantile(s_arr, 0.1)), "s_gap_median": float(np.median(s_arr)),
            "s_gap_q90": float(np.quantile(s_arr, 0.9)),
        })
    return {"rows": rows, "growth_exponent": growth_exponent(rows), "realizations": len(per)}


def growth_exponent(rows) -> float:
    """Least-squares slope of ``log mean_s_gap`` against ``log 1/(N eta)``."""
    pts = [(math.log(1.0 / (r["N"] * r["eta"])), math.log(r["mean_s_gap"]))
           for r in rows if r["mean_s_gap"] > 0]
    if len(pts) < 2:
        return float("nan")
    xs, ys = zip(*pts)
    return float(np.polyfit(xs, ys, 1)[0])


# ---------------------------------------------------------------------------
# Martingale quadratic variation
# ---------------------------------------------------------------------------

def martingale_qv_estimate(trajectory: FlowTrajectory, z, min_steps: int = 8) -> dict:
    """Quadratic-variation dominator of the trace martingale along a path.

    Returns ``dominator = int_0^t Im S_s(z) ds / (N^2 eta^3)`` (trapezoid on
    the path grid) and ``realized = |S_t - S_0 - sum_k drift_k dt_k|^2`` with
    the left-point discretized Burgers drift.
    """
    z = as_complex(z)
    steps = len(trajectory.times) - 1
    if steps == 0:
        return {"dominator": 0.0, "realized": 0.0, "steps": 0}
    if steps < min_steps:
        raise PrecisionError(f"need >= {min_steps} path steps, got {steps}")
    N = trajectory.matrices[0].size
    S, dS, d2S = [], [], []
    for H in trajectory.matrices:
        lam = np.linalg.eigvalsh(H.matrix)
        w = 1.0 / (lam - z)
        S.append(np.mean(w))
        dS.append(np.mean(w ** 2))
        d2S.append(2.0 * np.mean(w ** 3))
    S, dS, d2S = map(np.array, (S, dS, d2S))
    dt = np.diff(trajectory.times)
    drift = np.sum((S[:-1] * dS[:-1] + d2S[:-1] / (2.0 * N)) * dt)
    realized = abs(S[-1] - S[0] - drift) ** 2
    integral = float(np.sum(0.5 * (S.imag[1:] + S.imag[:-1]) * dt))
    dominator = integral / (N ** 2 * z.imag ** 3)
    return {"dominator": dominator, "realized": float(realized), "steps": steps}
