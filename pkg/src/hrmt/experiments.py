"""Experiment runner: fan realizations out, reduce in order, write outputs.

Realization ``k`` always draws from ``RngStream(master_seed, k)`` and runs
with single-threaded BLAS, so every per-realization value is independent of
the worker count.  Reductions happen in the parent process in realization
order.
"""

from __future__ import annotations

import datetime as _dt
import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as hio
from .config import ExperimentConfig
from .dbm import (burgers_drift_check, drift_identity_check, flow_time, stability_realization,
                  summarize_stability, theorem_shape, ward_identity_check)
from .ensemble import (EnsembleConfig, IndexSpace, RngStream, assemble, distance_matrix, goe_matrix,
                       normalization_Z, variance_profile)
from .local_stats import (Window, bulk_eigenvalues, characteristic_functional, count_report,
                          density_of_states, gap_ratios, localization_mass, mean_and_stderr,
                          poisson_kernel_paths, poisson_pmf, spectral_averaging_value,
                          wegner_minami_values)
from .spectral import ComplexEnergy, SpectralData, eigendecompose, spectrum_rows

try:
    VERSION = metadata.version("artifact")
except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
    VERSION = "0.1.0"

SLUGS = {"Sample": "sample", "Spectrum": "spectrum", "PoissonTest": "poisson_test",
         "GapRatioSweep": "gap_ratio_sweep", "Localization": "localization",
         "DbmStability": "dbm_stability", "RpTest": "rp_test", "IdentityCheck": "identity_check",
         "WegnerMinami": "wegner_minami"}


@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    started: str
    wall_clock_seconds: float
    master_seed: int
    seeds: List[dict]
    files: List[dict]
    status: str = "ok"
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "config": self.config, "version": self.version,
                "started": self.started, "wall_clock_seconds": self.wall_clock_seconds,
                "master_seed": self.master_seed, "seeds": self.seeds, "files": self.files,
                "status": self.status, "summary": self.summary}

    @property
    def ok(self) -> bool:
        return self.status == "ok"


# ---------------------------------------------------------------------------
# Parallel map
# ---------------------------------------------------------------------------

def _init_worker():
    threadpool_limits(1)


def parallel_map(fn: Callable, items, workers: int = 1) -> list:
    """Order-preserving map; ``workers > 1`` uses a process pool."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        with threadpool_limits(1):
            return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), initializer=_init_worker) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

class _Outputs:
    def __init__(self, cfg: ExperimentConfig, plots: bool):
        self.dir = Path(cfg.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.slug = SLUGS[cfg.experiment]
        self.plots = plots
        self.paths: List[Path] = []

    def csv(self, name, header, rows):
        self.paths.append(hio.write_csv(self.dir / name, header, rows))

    def json(self, name, doc):
        self.paths.append(hio.write_json(self.dir / name, doc))

    def hmat(self, name, matrix, header):
        self.paths.append(hio.write_hmat(self.dir / name, matrix, header))

    def figure(self, fn, name, *args, **kw):
        if self.plots:
            self.paths.append(fn(self.dir / name, *args, **kw))

    def report(self, header, rows, summary):
        """Per-realization CSV with a trailing mean row, plus the JSON summary."""
        self.csv(f"{self.slug}_realizations.csv", header, rows + [_summary_row(header, rows)])
        self.json(f"{self.slug}_summary.json", summary)


def _summary_row(header, rows):
    out = []
    for j, name in enumerate(header):
        if j == 0:
            out.append("summary")
        elif name in ("seed", "stream_index"):
            out.append("")
        else:
            col = [r[j] for r in rows]
            if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
                   for v in col):
                out.append(math.fsum(float(v) for v in col) / len(col))
            else:
                out.append("")
    return out


def _seed_cols(cfg: ExperimentConfig, k: int):
    return [k, RngStream(cfg.master_seed, k).derived_seed()]


def _stream(cfg: ExperimentConfig, k: int) -> RngStream:
    return RngStream(cfg.master_seed, k)


def _tag(v) -> str:
    return ("%g" % v).replace("-", "m").replace(".", "p")


# ---------------------------------------------------------------------------
# Sample
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=4)
def _distance_index(n: int):
    d = distance_matrix(n).ravel()
    return d, np.bincount(d, minlength=n + 1)


def _sample_task(cfg: ExperimentConfig, k: int):
    H = assemble(cfg.ensemble, _stream(cfg, k))
    n = cfg.ensemble.n
    d, counts = _distance_index(n)
    var_d = np.bincount(d, weights=H.matrix.ravel() ** 2, minlength=n + 1) / counts
    off = H.matrix - np.diag(np.diag(H.matrix))
    stats = [float(np.trace(H.matrix)), float(np.linalg.norm(H.matrix)), float(np.max(np.abs(off)))]
    return H.matrix, stats, var_d


def _run_sample(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    res = parallel_map(functools.partial(_sample_task, cfg), range(cfg.realizations), cfg.workers)
    n = cfg.ensemble.n
    header = ["realization", "seed", "trace", "frobenius", "max_abs_offdiag"] + [f"var_d{d}" for d in range(n + 1)]
    rows = []
    for k, (M, stats, var_d) in enumerate(res):
        rows.append(_seed_cols(cfg, k) + stats + list(var_d))
        if cfg.params["save_matrices"]:
            out.hmat(f"matrix_{k:05d}.hmat", M,
                     {"config": cfg.ensemble.to_dict(), "master_seed": cfg.master_seed,
                      "stream_index": k, "realization": k})
    xs = list(range(n + 1))
    est = [mean_and_stderr(r[2][d] for r in res) for d in xs]
    ref: list = [""] * len(xs)
    if cfg.ensemble.model == "ultrametric":
        dd, counts = _distance_index(n)
        prof = np.bincount(dd, weights=variance_profile(n, cfg.ensemble.c, cfg.ensemble.normalized).ravel(),
                           minlength=n + 1) / counts
        ref = list(prof)
    out.csv("sample_variance_by_distance.csv", ["x", "y", "stderr", "reference"],
            [[x, m, se, r] for x, (m, se), r in zip(xs, est, ref)])
    out.figure(line_plot, "sample_variance_by_distance.png", xs, [m for m, _ in est], [se for _, se in est],
               references={"closed form": ref} if ref[0] != "" else None, logy=True,
               xlabel="hierarchical distance d", ylabel="mean |H(x,y)|^2", title="Entry variance by distance")
    summary = {"experiment": "Sample", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
               "variance_by_distance": [{"d": x, "mean": m, "stderr": se} for x, (m, se) in zip(xs, est)]}
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------

def _spectrum_task(cfg: ExperimentConfig, k: int):
    H = assemble(cfg.ensemble, _stream(cfg, k))
    sd = eigendecompose(H, vectors=cfg.params["eigenvectors"])
    return sd


def _run_spectrum(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    res: List[SpectralData] = parallel_map(functools.partial(_spectrum_task, cfg), range(cfg.realizations),
                                           cfg.workers)
    frac = cfg.params["bulk_fraction"]
    header = ["realization", "seed", "min_eigenvalue", "max_eigenvalue", "bulk_gap_ratio", "dos_at_E"]
    rows = []
    for k, sd in enumerate(res):
        out.csv(f"spectrum_{k:05d}.csv", ["index", "eigenvalue"], spectrum_rows(sd))
        if sd.eigenvectors is not None:
            out.hmat(f"eigenvectors_{k:05d}.hmat", sd.eigenvectors,
                     {"kind": "eigenvectors", "master_seed": cfg.master_seed, "stream_index": k})
        bulk = bulk_eigenvalues(sd.eigenvalues, frac)
        r = float(np.mean(gap_ratios(bulk))) if len(bulk) >= 3 else float("nan")
        rows.append(_seed_cols(cfg, k) + [float(sd.eigenvalues[0]), float(sd.eigenvalues[-1]), r,
                                          density_of_states(sd, cfg.energy)])
    lo = min(sd.eigenvalues[0] for sd in res)
    hi = max(sd.eigenvalues[-1] for sd in res)
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, 41)
    hists = np.array([np.histogram(sd.eigenvalues, edges)[0] / (sd.size * np.diff(edges)) for sd in res])
    centers = 0.5 * (edges[1:] + edges[:-1])
    est = [mean_and_stderr(hists[:, j]) for j in range(len(centers))]
    out.csv("spectrum_density.csv", ["x", "y", "stderr"], [[x, m, se] for x, (m, se) in zip(centers, est)])
    out.figure(line_plot, "spectrum_density.png", centers, [m for m, _ in est], [se for _, se in est],
               xlabel="energy", ylabel="density of states", title="Averaged eigenvalue density")
    summary = {"experiment": "Spectrum", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
               "size": cfg.ensemble.size}
    if cfg.ensemble.size >= 8:
        m, se = mean_and_stderr(r[4] for r in rows)
        summary["bulk_gap_ratio"] = {"estimate": m, "stderr": se}
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# PoissonTest
# ---------------------------------------------------------------------------

def window_offsets(N: int, B, scale: float, pool: str) -> List[float]:
    """Shifts of ``B`` (rescaled units) pooled for the counting statistics.

    With ``pool="mesoscopic"`` the translates ``B + j|B|`` tile the
    neighbourhood ``|lambda - E| <= N^{-1/2}/2`` of the energy, rescaled.
    """
    if pool == "none":
        return [0.0]
    a, b = B
    width = b - a
    L = 0.5 * scale * N ** -0.5
    offsets = []
    j = 0
    while True:
        added = False
        for s in ((j,) if j == 0 else (-j, j)):
            if a + s * width >= -L and b + s * width <= L:
                offsets.append(s * width)
                added = True
        if not added:
            break
        j += 1
    return sorted(offsets) or [0.0]


def _poisson_task(cfg: ExperimentConfig, offsets, k: int):
    p = cfg.params
    ens = cfg.ensemble
    N = ens.size
    stream = _stream(cfg, k)
    H = assemble(ens, stream)
    sd = eigendecompose(H, vectors=False)
    scale = p["scale"] or N
    pts = scale * (sd.eigenvalues - cfg.energy)
    a, b = p["B"]
    counts = [int(np.searchsorted(pts, b + o, side="right") - np.searchsorted(pts, a + o, side="left"))
              for o in offsets]
    bulk = bulk_eigenvalues(sd.eigenvalues, p["bulk_fraction"])
    r = float(np.mean(gap_ratios(bulk)))
    zs = [complex(*z) for z in p["z"]]
    mus = [poisson_kernel_paths(sd, z, cfg.energy, N)[0] for z in zs]
    trunc = []
    for m in p["truncation_m"] or []:
        # same stream: levels 0..m coincide with those of H
        Hm = assemble(EnsembleConfig(n=ens.n, c=ens.c, model="truncated", m=m), stream)
        sdm = eigendecompose(Hm, vectors=False)
        lam = sdm.eigenvalues / (normalization_Z(ens.n, ens.c) if ens.normalized else 1.0)
        sdm = SpectralData(lam, None, N)
        trunc.append([poisson_kernel_paths(sdm, z, cfg.energy, N)[0] for z in zs])
    return counts, r, mus, trunc


def _run_poisson(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import bar_plot
    p = cfg.params
    N = cfg.ensemble.size
    scale = p["scale"] or N
    offsets = window_offsets(N, p["B"], scale, p["pool"])
    res = parallel_map(functools.partial(_poisson_task, cfg, offsets), range(cfg.realizations), cfg.workers)
    zs = [complex(*z) for z in p["z"]]
    ms = p["truncation_m"] or []
    header = (["realization", "seed", "gap_ratio", "mean_count"] + [f"count_w{j}" for j in range(len(offsets))]
              + [f"mu_Pz{i}" for i in range(len(zs))]
              + [f"mu_Pz{i}_m{m}" for m in ms for i in range(len(zs))])
    rows = []
    for k, (counts, r, mus, trunc) in enumerate(res):
        rows.append(_seed_cols(cfg, k) + [r, math.fsum(counts) / len(counts)] + counts + mus
                    + [v for t in trunc for v in t])
    pooled = [c for counts, *_ in res for c in counts]
    rep = count_report(pooled, p["B"], cfg.master_seed)
    g_mean, g_se = mean_and_stderr(r for _, r, _, _ in res)
    pmf = rep.aux["pmf"]
    ks = np.arange(len(pmf))
    ref = poisson_pmf(rep.estimate, len(pmf) - 1)
    n_s = len(pooled)
    out.csv("poisson_test_pmf.csv", ["x", "y", "stderr", "poisson"],
            [[int(x), float(y), math.sqrt(y * (1 - y) / n_s), float(q)] for x, y, q in zip(ks, pmf, ref)])
    out.figure(bar_plot, "poisson_test_pmf.png", ks, pmf, np.sqrt(pmf * (1 - pmf) / n_s), reference=ref,
               reference_label="Poisson, same mean", xlabel="count in B", ylabel="probability",
               title="Counting statistics of the rescaled spectrum")
    char = []
    for i, z in enumerate(zs):
        m, se = characteristic_functional([mus[i] for _, _, mus, _ in res])
        entry = {"z": [z.real, z.imag], "estimate": m, "stderr": se, "truncated": []}
        for j, mm in enumerate(ms):
            mt, set_ = characteristic_functional([tr[j][i] for *_, tr in res])
            diff = [math.exp(-mus[i]) - math.exp(-tr[j][i]) for _, _, mus, tr in res]
            dm, dse = mean_and_stderr(diff)
            entry["truncated"].append({"m": mm, "estimate": mt, "stderr": set_,
                                       "difference": dm, "difference_stderr": dse})
        char.append(entry)
    summary = {
        "experiment": "PoissonTest", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
        "size": N, "energy": cfg.energy, "interval": list(p["B"]), "window_offsets": offsets,
        "pooled_samples": n_s,
        "count": {"mean": rep.estimate, "stderr": rep.stderr, "variance": rep.aux["variance"],
                  "var_mean_ratio": rep.aux["var_mean_ratio"], "pmf": pmf.tolist()},
        "gap_ratio": {"estimate": g_mean, "stderr": g_se, "bulk_fraction": p["bulk_fraction"]},
        "characteristic_functional": char,
    }
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# GapRatioSweep
# ---------------------------------------------------------------------------

def _sweep_ensemble(ens: EnsembleConfig, c: float) -> EnsembleConfig:
    if ens.model == "rosenzweig_porter":
        return ens.replace(c=c, t=float(ens.size) ** -(1.0 + c))
    return ens.replace(c=c)


def _gap_task(cfg: ExperimentConfig, item):
    c, k = item
    H = assemble(_sweep_ensemble(cfg.ensemble, c), _stream(cfg, k))
    sd = eigendecompose(H, vectors=False)
    return float(np.mean(gap_ratios(bulk_eigenvalues(sd.eigenvalues, cfg.params["bulk_fraction"]))))


def _run_sweep(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    cs = [float(c) for c in cfg.params["c_values"]]
    R = cfg.realizations
    items = [(c, k) for k in range(R) for c in cs]
    vals = parallel_map(functools.partial(_gap_task, cfg), items, cfg.workers)
    table = np.array(vals).reshape(R, len(cs))
    header = ["realization", "seed"] + [f"r_c{_tag(c)}" for c in cs]
    rows = [_seed_cols(cfg, k) + list(table[k]) for k in range(R)]
    est = [mean_and_stderr(table[:, j]) for j in range(len(cs))]
    out.csv("gap_ratio_sweep_phase.csv", ["c", "mean_r", "stderr"], [[c, m, se] for c, (m, se) in zip(cs, est)])
    out.figure(line_plot, "gap_ratio_sweep_phase.png", cs, [m for m, _ in est], [se for _, se in est],
               references={"Poisson 2ln2-1": [2 * math.log(2) - 1] * len(cs), "GOE 0.5307": [0.5307] * len(cs)},
               xlabel="c", ylabel="mean gap ratio", title="Gap ratio across c")
    summary = {"experiment": "GapRatioSweep", "realizations": R, "master_seed": cfg.master_seed,
               "size": cfg.ensemble.size, "phase": [{"c": c, "mean_r": m, "stderr": se}
                                                    for c, (m, se) in zip(cs, est)]}
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------

def localization_radius(n: int, m_fraction: float) -> int:
    return int(math.floor(m_fraction * n + 0.5))


def _loc_task(cfg: ExperimentConfig, item):
    n, k = item
    p = cfg.params
    ens = cfg.ensemble.replace(n=n)
    N = ens.size
    m = localization_radius(n, p["m_fraction"])
    win = Window.mesoscopic(cfg.energy, N, p["w"])
    stream = _stream(cfg, k)
    H = assemble(ens, stream)
    sd = eigendecompose(H, vectors=True, energy_range=(win.lower, win.upper))
    space = IndexSpace(n)
    rep = localization_mass(sd, space, p["site"], m, win)
    levels = int(np.count_nonzero(win.mask(sd.eigenvalues)))
    trunc = float("nan")
    if p["truncated_check"]:
        Ht = assemble(EnsembleConfig(n=n, c=ens.c, model="truncated", m=m), stream)
        sdt = eigendecompose(Ht, vectors=True)
        trunc = localization_mass(sdt, space, p["site"], m,
                                  Window(0.0, float(np.max(np.abs(sdt.eigenvalues))) + 1.0)).outside_mass
    return rep.inside_mass, rep.outside_mass, levels, trunc


def _run_localization(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    p = cfg.params
    ns = p["n_values"] or [cfg.ensemble.n]
    R = cfg.realizations
    items = [(n, k) for k in range(R) for n in ns]
    vals = parallel_map(functools.partial(_loc_task, cfg), items, cfg.workers)
    header = ["realization", "seed"]
    for n in ns:
        header += [f"inside_n{n}", f"outside_n{n}", f"levels_n{n}", f"truncated_outside_n{n}"]
    rows = []
    for k in range(R):
        row = _seed_cols(cfg, k)
        for j in range(len(ns)):
            row += list(vals[k * len(ns) + j])
        rows.append(row)
    per_n = []
    for j, n in enumerate(ns):
        outside = np.array([vals[k * len(ns) + j][1] for k in range(R)])
        trunc = [vals[k * len(ns) + j][3] for k in range(R)]
        m, se = mean_and_stderr(outside)
        per_n.append({"n": n, "m": localization_radius(n, p["m_fraction"]),
                      "halfwidth": float(2 ** n) ** -(1 - p["w"]),
                      "median_outside": float(np.median(outside)), "mean_outside": m, "stderr": se,
                      "max_truncated_outside": None if p["truncated_check"] is False else float(np.max(trunc)),
                      "mean_levels": math.fsum(vals[k * len(ns) + j][2] for k in range(R)) / R})
    out.csv("localization_outside_mass.csv", ["x", "y", "stderr", "median"],
            [[d["n"], d["mean_outside"], d["stderr"], d["median_outside"]] for d in per_n])
    out.figure(line_plot, "localization_outside_mass.png", ns, [d["mean_outside"] for d in per_n],
               [d["stderr"] for d in per_n], references={"median": [d["median_outside"] for d in per_n]},
               logy=True, xlabel="n", ylabel="correlator mass outside the ball",
               title="Eigenfunction correlator outside the hierarchical ball")
    summary = {"experiment": "Localization", "realizations": R, "master_seed": cfg.master_seed,
               "site": p["site"], "w": p["w"], "per_n": per_n}
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# DbmStability
# ---------------------------------------------------------------------------

def stability_setup(cfg: ExperimentConfig):
    """Initial-condition config, flow exponent and flow time for a stability run."""
    ens = cfg.ensemble
    p = cfg.params
    c_flow = p["c_flow"]
    if c_flow is None:
        c_flow = ens.c if ens.model in ("ultrametric", "truncated") and ens.c > 0 else 0.5
    if ens.model == "ultrametric":
        ens = EnsembleConfig(n=ens.n, c=ens.c, model="truncated", m=max(ens.n - 1, 0))
    t = p["t"] if p["t"] is not None else flow_time(ens.size, c_flow)
    return ens, float(c_flow), float(t)


def _run_stability(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    p = cfg.params
    ens0, c_flow, t = stability_setup(cfg)
    N = ens0.size
    zs = [ComplexEnergy(cfg.energy, f / N) for f in p["eta_factors"]]
    task = functools.partial(stability_realization, ens0, t, zs, x=p["site"], with_green=p["green"])
    per = parallel_map(task, [_stream(cfg, k) for k in range(cfg.realizations)], cfg.workers)
    summ = summarize_stability(per, N, c_flow, t, zs)
    header = ["realization", "seed"]
    for f in p["eta_factors"]:
        header += [f"s_gap_eta{_tag(f)}", f"g_gap_eta{_tag(f)}"]
    rows = [_seed_cols(cfg, k) + [v for g in gaps for v in (g.s_gap, g.g_gap)] for k, gaps in enumerate(per)]
    cols = ["N", "c_flow", "eta", "t", "mean_s_gap", "stderr", "mean_g_gap", "crude_bound", "theorem_shape"]
    out.csv("dbm_stability_sweep.csv", cols, [[r[c] for c in cols] for r in summ["rows"]])
    xs = [1.0 / (r["N"] * r["eta"]) for r in summ["rows"]]
    out.csv("dbm_stability_plot.csv", ["x", "y", "stderr"],
            [[x, r["mean_s_gap"], r["stderr"]] for x, r in zip(xs, summ["rows"])])
    out.figure(line_plot, "dbm_stability.png", xs, [r["mean_s_gap"] for r in summ["rows"]],
               [r["stderr"] for r in summ["rows"]],
               references={"theorem shape": [r["theorem_shape"] for r in summ["rows"]],
                           "crude bound": [r["crude_bound"] for r in summ["rows"]]},
               logx=True, logy=True, xlabel="1/(N eta)", ylabel="mean |S_t - S_0|",
               title="Stability of the Stieltjes transform under the flow")
    summary = {"experiment": "DbmStability", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
               "initial": ens0.to_dict(), "c_flow": c_flow, "t": t, "rows": summ["rows"],
               "growth_exponent": summ["growth_exponent"]}
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# RpTest
# ---------------------------------------------------------------------------

def _rp_task(cfg: ExperimentConfig, k: int):
    p = cfg.params
    ens = cfg.ensemble
    H = assemble(ens, _stream(cfg, k))
    sd = eigendecompose(H, vectors=False)
    r = float(np.mean(gap_ratios(bulk_eigenvalues(sd.eigenvalues, p["bulk_fraction"]))))
    off = float("nan")
    if p["localization"]:
        win = Window.mesoscopic(cfg.energy, ens.size, p["w"])
        sdw = eigendecompose(H, vectors=True, energy_range=(win.lower, win.upper))
        rep = localization_mass(sdw, IndexSpace(ens.n), p["site"], 0, win)
        off = rep.outside_mass
    return r, off


def _run_rp(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    res = parallel_map(functools.partial(_rp_task, cfg), range(cfg.realizations), cfg.workers)
    header = ["realization", "seed", "gap_ratio", "offsite_correlator_mass"]
    rows = [_seed_cols(cfg, k) + [r, off] for k, (r, off) in enumerate(res)]
    m, se = mean_and_stderr(r for r, _ in res)
    vals = np.array([r for r, _ in res])
    edges = np.linspace(0.0, 1.0, 21)
    hist = np.histogram(vals, edges)[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    out.csv("rp_test_gap_ratio_hist.csv", ["x", "y", "stderr"],
            [[x, h / len(vals), math.sqrt(h) / len(vals)] for x, h in zip(centers, hist)])
    out.figure(line_plot, "rp_test_gap_ratio_hist.png", centers, hist / len(vals),
               np.sqrt(hist) / len(vals), xlabel="per-realization mean gap ratio", ylabel="fraction",
               title="Gap ratio across realizations")
    ens = cfg.ensemble
    summary = {"experiment": "RpTest", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
               "size": ens.size, "t": ens.t, "c": ens.c, "gap_ratio": {"estimate": m, "stderr": se}}
    if cfg.params["localization"]:
        om, ose = mean_and_stderr(off for _, off in res)
        summary["offsite_correlator_mass"] = {"estimate": om, "stderr": ose}
    out.report(header, rows, summary)
    return summary, "ok"


# ---------------------------------------------------------------------------
# IdentityCheck
# ---------------------------------------------------------------------------

def _identity_task(cfg: ExperimentConfig, k: int):
    p = cfg.params
    stream = _stream(cfg, k)
    g = stream.generator(1)
    if p["N"] is not None:
        H = goe_matrix(stream.generator(0), p["N"])
    else:
        H = assemble(cfg.ensemble, stream).matrix
    N = H.shape[0]
    h = p["energy_halfwidth"]
    E = float(g.uniform(cfg.energy - h, cfg.energy + h))
    eta = float(math.exp(g.uniform(math.log(p["eta_min"]), math.log(p["eta_max"]))))
    x, y = (int(v) for v in g.integers(1, N + 1, size=2))
    z = complex(E, eta)
    drift = drift_identity_check(H, z, x, y)["relative_error"]
    burgers = burgers_drift_check(H, z)["relative_error"]
    sd = eigendecompose(H, vectors=True)
    ward = ward_identity_check(sd, x, z)
    direct, via = poisson_kernel_paths(sd, N * (z - E), E, N)
    pk = abs(direct - via) / max(abs(via), abs(direct), 1e-300)
    ok = drift <= p["drift_tol"] and burgers <= p["drift_tol"] and ward <= p["ward_tol"] and pk <= p["poisson_tol"]
    return [N, E, eta, x, y, drift, burgers, ward, pk, int(ok)]


def _run_identity(cfg: ExperimentConfig, out: _Outputs):
    res = parallel_map(functools.partial(_identity_task, cfg), range(cfg.realizations), cfg.workers)
    header = ["realization", "seed", "N", "E", "eta", "x", "y", "drift_error", "burgers_error", "ward_error",
              "poisson_kernel_error", "passed"]
    rows = [_seed_cols(cfg, k) + r for k, r in enumerate(res)]
    names = ["drift_error", "burgers_error", "ward_error", "poisson_kernel_error"]
    worst = {nm: max(r[5 + j] for r in res) for j, nm in enumerate(names)}
    passed = all(r[-1] for r in res)
    summary = {"experiment": "IdentityCheck", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
               "max_errors": worst, "tolerances": {k: cfg.params[k] for k in ("drift_tol", "ward_tol", "poisson_tol")},
               "failures": [k for k, r in enumerate(res) if not r[-1]], "passed": passed}
    out.report(header, rows, summary)
    return summary, "ok" if passed else "failed"


# ---------------------------------------------------------------------------
# WegnerMinami
# ---------------------------------------------------------------------------

def translates(region, width: float) -> np.ndarray:
    """Disjoint translates of ``[0, width]`` tiling ``region`` from its left end."""
    a, b = region
    count = max(int(math.floor((b - a) / width + 1e-9)), 1)
    left = a + width * np.arange(count)
    return np.stack([left, left + width], axis=1)


def _wm_task(cfg: ExperimentConfig, k: int):
    p = cfg.params
    N = cfg.ensemble.size
    H = assemble(cfg.ensemble, _stream(cfg, k))
    sd = eigendecompose(H, vectors=p["spectral_averaging"])
    out = []
    for f in p["width_factors"]:
        ivs = translates(p["region"], f / N)
        w, m = wegner_minami_values(sd, ivs)
        sa = spectral_averaging_value(sd, p["site"], ivs) if p["spectral_averaging"] else float("nan")
        out.append((w, m, sa))
    return out


def _run_wegner(cfg: ExperimentConfig, out: _Outputs):
    from .plotting import line_plot
    p = cfg.params
    N = cfg.ensemble.size
    res = parallel_map(functools.partial(_wm_task, cfg), range(cfg.realizations), cfg.workers)
    fs = p["width_factors"]
    header = ["realization", "seed"]
    for f in fs:
        header += [f"wegner_w{_tag(f)}", f"minami_w{_tag(f)}", f"spectral_avg_w{_tag(f)}"]
    rows = [_seed_cols(cfg, k) + [v for trip in r for v in trip] for k, r in enumerate(res)]
    C_V = cfg.ensemble.potential.density_bound
    sweep = []
    for j, f in enumerate(fs):
        wm, wse = mean_and_stderr(r[j][0] for r in res)
        mm, mse = mean_and_stderr(r[j][1] for r in res)
        entry = {"interval_length": f / N, "width_factor": f, "translates": len(translates(p["region"], f / N)),
                 "wegner": wm, "wegner_stderr": wse, "minami": mm, "minami_stderr": mse}
        if p["spectral_averaging"]:
            sm, sse = mean_and_stderr(r[j][2] for r in res)
            entry.update(spectral_averaging=sm, spectral_averaging_stderr=sse)
        sweep.append(entry)
    out.csv("wegner_minami_sweep.csv",
            ["x", "y", "stderr", "minami", "minami_stderr", "density_bound"],
            [[e["interval_length"], e["wegner"], e["wegner_stderr"], e["minami"], e["minami_stderr"], C_V]
             for e in sweep])
    xs = [e["interval_length"] for e in sweep]
    out.figure(line_plot, "wegner_minami_sweep.png", xs, [e["wegner"] for e in sweep],
               [e["wegner_stderr"] for e in sweep],
               references={"minami ratio": [e["minami"] for e in sweep], "density bound": [C_V] * len(xs),
                           "squared bound": [C_V ** 2] * len(xs)},
               logx=True, xlabel="|I|", ylabel="ratio", title="Wegner and Minami ratios")
    minis = [e["minami"] for e in sweep]
    summary = {"experiment": "WegnerMinami", "realizations": cfg.realizations, "master_seed": cfg.master_seed,
               "size": N, "density_bound": C_V, "sweep": sweep,
               "max_wegner_over_bound": max(e["wegner"] for e in sweep) / C_V,
               "minami_growth": max(minis) / min(minis) if min(minis) > 0 else float("inf")}
    out.report(header, rows, summary)
    return summary, "ok"


RUNNERS = {"Sample": _run_sample, "Spectrum": _run_spectrum, "PoissonTest": _run_poisson,
           "GapRatioSweep": _run_sweep, "Localization": _run_localization, "DbmStability": _run_stability,
           "RpTest": _run_rp, "IdentityCheck": _run_identity, "WegnerMinami": _run_wegner}


def run(config: ExperimentConfig, plots: bool = True) -> RunManifest:
    """Run one experiment and write its outputs plus ``manifest.json``.

    Raises :class:`~hrmt.errors.SolverError` on eigensolver failure and
    :class:`OSError` when outputs cannot be written.
    """
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    out = _Outputs(config, plots)
    summary, status = RUNNERS[config.experiment](config, out)
    files = [{"path": p.name, "sha256": hio.sha256(p), "bytes": p.stat().st_size} for p in out.paths]
    seeds = [{"realization": k, "stream_index": k, "seed": RngStream(config.master_seed, k).derived_seed()}
             for k in range(config.realizations)]
    manifest = RunManifest(config.experiment, config.to_dict(), VERSION, started,
                           round(time.perf_counter() - t0, 3), config.master_seed, seeds, files, status,
                           summary)
    hio.write_json(Path(config.output_dir) / "manifest.json", manifest.to_dict())
    return manifest


def verify_manifest(path) -> List[str]:
    """Names of files whose checksum no longer matches the manifest."""
    import json
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for f in doc["files"]:
        p = path.parent / f["path"]
        if not p.exists() or hio.sha256(p) != f["sha256"]:
            bad.append(f["path"])
    return bad
