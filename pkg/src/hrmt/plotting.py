"""PNG figures rendered next to the plot-ready CSV files.

Figures use the Agg backend and carry no timestamp or version metadata, so
identical data gives identical bytes.
"""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import atomic_write  # noqa: E402

_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_METADATA)
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return Path(path)


def line_plot(path, x, y, err=None, *, xlabel="", ylabel="", title="", references=None,
              logx=False, logy=False, bands=None) -> Path:
    """Estimates with error bars plus optional reference curves.

    ``references`` maps a label to y-values on the same ``x``; ``bands``
    maps a label to a ``(lo, hi)`` horizontal band.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    if err is None:
        ax.plot(x, y, "o-", label="estimate")
    else:
        ax.errorbar(x, y, yerr=err, fmt="o-", capsize=3, label="estimate")
    for label, ref in (references or {}).items():
        ax.plot(x, ref, "--", label=label)
    for label, (lo, hi) in (bands or {}).items():
        ax.axhspan(lo, hi, alpha=0.15, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def bar_plot(path, x, y, err=None, *, reference=None, reference_label="reference",
             xlabel="", ylabel="", title="") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x, y, yerr=err, alpha=0.6, capsize=2, label="empirical")
    if reference is not None:
        ax.plot(x, reference, "ko--", label=reference_label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)
