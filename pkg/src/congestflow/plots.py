"""Static SVG figures built from the CSV artifacts of a run."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .exceptions import MissingArtifact  # noqa: E402
from .functionals import internal_energy  # noqa: E402
from .grid import Grid, from_density  # noqa: E402

SVG_META = {"Date": None}


def read_solution(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(k, times, centers, densities)`` from a solution table; densities are (N + 1, n)."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"{path} not found")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["k", "t", "cell", "x", "rho"]:
            raise MissingArtifact(f"{path} does not have the columns k,t,cell,x,rho")
        rows = [(int(r["k"]), float(r["t"]), int(r["cell"]), float(r["x"]), float(r["rho"])) for r in reader]
    if not rows:
        raise MissingArtifact(f"{path} is empty")
    k = np.array([r[0] for r in rows])
    cell = np.array([r[2] for r in rows])
    N, n = k.max() + 1, cell.max() + 1
    if k.size != N * n:
        raise MissingArtifact(f"{path} is not a full (slice, cell) table")
    rho = np.empty((N, n))
    rho[k, cell] = [r[4] for r in rows]
    times = np.empty(N)
    times[k] = [r[1] for r in rows]
    x = np.empty(n)
    x[cell] = [r[3] for r in rows]
    return k, times, x, rho


def _save(fig, path: Path):
    plt.rcParams["svg.hashsalt"] = "congestflow"
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def density_heatmap(times, x, rho, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(rho, origin="lower", aspect="auto", cmap="viridis",
                   extent=(0.0, 1.0, times[0], times[-1]), vmin=rho.min(), vmax=rho.max())
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    fig.colorbar(im, ax=ax, label="density")
    _save(fig, path)
    return im.get_clim()


def um_curves(times, rho, m_list, path: Path):
    grid = Grid(rho.shape[1])
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in m_list:
        u = [internal_energy(from_density(grid, r, normalize=True), m) for r in rho]
        ax.plot(times, u, marker="o", ms=3, label=f"m = {m:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("U_m")
    ax.legend()
    _save(fig, path)


def moser_plot(moser_csv: Path, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    if moser_csv.exists():
        data = np.genfromtxt(moser_csv, delimiter=",", names=True)
        data = np.atleast_1d(data)
        ax.semilogy(data["n"], data["L"], marker="o")
    else:
        ax.text(0.5, 0.5, "no Moser trace in this run", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("n")
    ax.set_ylabel("L^{m_n}")
    _save(fig, path)


def emit_plots(artifact_dir, m_list=(1.0, 2.0, 3.0)) -> dict:
    """Write density.svg, um_curves.svg (unless ``m_list`` is empty) and moser.svg.

    Returns notes on what was written, suitable for the run report.
    """
    d = Path(artifact_dir)
    _, times, x, rho = read_solution(d / "solution.csv")
    notes = {"written": []}
    lo, hi = density_heatmap(times, x, rho, d / "density.svg")
    notes["written"].append("density.svg")
    notes["color_range"] = [float(lo), float(hi)]
    if m_list:
        um_curves(times, rho, list(m_list), d / "um_curves.svg")
        notes["written"].append("um_curves.svg")
    else:
        notes["um_curves"] = "omitted: empty m_list"
    moser_plot(d / "moser.csv", d / "moser.svg")
    notes["written"].append("moser.svg")
    return notes
