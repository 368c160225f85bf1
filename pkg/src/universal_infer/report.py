"""CSV and SVG output for simulation cells."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from typing import Sequence

from .montecarlo import SimCell
from .slrt import GAMMA_ORIENTATION, GUARANTEE_VOID

CSV_COLUMNS = ("kind", "n", "d", "q", "delta", "gamma", "alpha", "reps", "seed",
               "statistic", "reject_rate", "stderr")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cells_to_csv(cells: Sequence[SimCell]) -> str:
    """Render cells as CSV text.

    Leading ``#`` lines record the gamma orientation and, when any cell used a
    critical-value override, that the finite-sample guarantee no longer holds.
    """
    buf = io.StringIO()
    buf.write(f"# {GAMMA_ORIENTATION}\n")
    overrides = sorted({c.critical_value for c in cells if c.critical_value is not None})
    if overrides:
        buf.write(f"# {GUARANTEE_VOID} (critical value {', '.join(map(repr, overrides))})\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in cells:
        writer.writerow([_fmt(getattr(c, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def read_cells_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def atomic_write(path, data: str | bytes) -> None:
    """Write to a temporary file beside ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def check_writable(path) -> None:
    """Raise OSError now if ``path`` could not be written later."""
    directory = os.path.dirname(os.path.abspath(os.fspath(path)))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".probe-")
    os.close(fd)
    os.unlink(tmp)


def render_svg(cells: Sequence[SimCell], x: str, title: str = "") -> str:
    """Single-panel line plot of reject rate vs ``x`` ("delta" or "gamma").

    Error bars span +/- 2 standard errors. One line per statistic kind.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "universal-infer"
    fig, ax = plt.subplots(figsize=(6, 4))
    for stat in sorted({c.statistic for c in cells}):
        sub = [c for c in cells if c.statistic == stat]
        xs = [getattr(c, x) for c in sub]
        ys = [c.reject_rate for c in sub]
        err = [2 * c.stderr for c in sub]
        ax.errorbar(xs, ys, yerr=err, marker="o", ms=3, capsize=2, label=stat)
    alphas = sorted({c.alpha for c in cells})
    for a in alphas:
        ax.axhline(a, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("delta (departure per coordinate)" if x == "delta"
                  else "gamma (evaluation-fold fraction n1/n)")
    ax.set_ylabel("rejection rate")
    if title:
        ax.set_title(title)
    if any(c.guarantee_void for c in cells):
        ax.text(0.01, 0.99, "universal guarantee void", transform=ax.transAxes,
                va="top", fontsize=8, color="red")
    ax.legend()
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
