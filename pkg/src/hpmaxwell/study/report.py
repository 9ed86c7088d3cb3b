"""CSV tables and log-log convergence plots."""

import math
import os
import warnings

import numpy as np

from .config import format_k

CSV_COLUMNS = ("dof", "N_k", "rel_err_curlk", "h", "quasiopt", "delta_k", "t_assemble", "t_solve")


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".10e")


def csv_name(p, k):
    return f"data_p{p}_k{format_k(k)}.csv"


def emit_csv(records, path, timings=True):
    """Write one ``data_p{p}_k{k}.csv`` per (p, k) pair into directory ``path``.

    Rows are sorted by level.  With ``timings=False`` the two timing columns
    hold ``nan`` so that repeated runs produce identical bytes.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    os.makedirs(path, exist_ok=True)
    groups = {}
    for r in records:
        groups.setdefault((r.p, complex(r.k)), []).append(r)
    written = []
    for (p, k), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], abs(kv[0][1]), kv[0][1].imag)):
        fname = os.path.join(path, csv_name(p, k))
        lines = ["# " + ",".join(CSV_COLUMNS)]
        for r in sorted(rs, key=lambda r: r.level):
            t = (r.t_assemble, r.t_solve) if timings else (float("nan"), float("nan"))
            vals = [str(int(r.dofs))] + [_fmt(v) for v in (r.nk, r.rel_err, r.h, r.quasiopt, r.delta_k, *t)]
            lines.append(",".join(vals))
        with open(fname, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(fname)
    return written


def read_csv(fname):
    """Data rows of a study CSV as a float array (rows, 8)."""
    return np.atleast_2d(np.loadtxt(fname, delimiter=",", comments="#"))


def _guide_label(p):
    return "$\\mathcal{O}(h)$" if p == 1 else f"$\\mathcal{{O}}(h^{{{p}}})$"


def emit_plot(records, path):
    """Log-log error against N_k for one order p, one polyline per k.

    A dashed slope ``-p`` guide passes through the last point of the
    lowest-|k| series.  Series with fewer than two points are skipped.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = list(records)
    orders = sorted({r.p for r in records})
    if len(orders) != 1:
        raise ValueError(f"emit_plot expects records of a single order, got p = {orders}")
    p = orders[0]
    series = {}
    for r in records:
        series.setdefault(complex(r.k), []).append(r)
    with matplotlib.rc_context({"svg.hashsalt": "hpmaxwell", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.8))
        anchor = None
        for k in sorted(series, key=lambda k: (abs(k), k.imag)):
            rs = sorted(series[k], key=lambda r: r.level)
            if len(rs) < 2:
                warnings.warn(f"p={p}, k={format_k(k)}: fewer than two points, series skipped")
                continue
            x = [r.nk for r in rs]
            y = [r.rel_err for r in rs]
            ax.loglog(x, y, "o-", lw=1.2, ms=4, label=f"$k = {format_k(k)}$")
            if anchor is None:
                anchor = (x, y)
        if anchor is not None:
            x, y = anchor
            xs = np.array([min(x), max(x)])
            ax.loglog(xs, y[-1] * (xs / x[-1]) ** (-p), "k--", lw=1.0, label=_guide_label(p))
        ax.set_xlabel("$N_k$ ~ DOFs per wavelength")
        ax.set_ylabel("rel. error in $\\|\\cdot\\|_{\\mathrm{curl},k}$")
        ax.set_title(f"$p = {p}$")
        ax.grid(True, which="both", lw=0.3, alpha=0.5)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        dirname = os.path.dirname(os.path.abspath(path))
        os.makedirs(dirname, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
