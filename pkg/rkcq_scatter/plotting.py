"""Static log-log convergence figure for the experiment driver."""
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .butcher import ButcherTableau  # noqa: E402

SYMBOLS = {"standard": "o", "differentiated": "s"}


def predicted_rate(method: str, tableau: ButcherTableau) -> int:
    """q for the standard scheme, min(q + 2, p) for the differentiated one."""
    if method == "differentiated":
        return min(tableau.q + 2, tableau.p)
    return tableau.q


def plot_convergence(rows: pd.DataFrame, tableau: ButcherTableau, path: Union[str, Path]) -> Path:
    """
    Max energy error against k for each method, with dashed reference slopes
    at the predicted rates anchored at each method's coarsest point.
    """
    path = Path(path)
    plt.rcParams["svg.hashsalt"] = "rkcq-scatter"
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for method, group in rows.groupby("method", sort=False):
        k = group["k"].to_numpy(dtype=float)
        err = group["max_energy_error"].to_numpy(dtype=float)
        ax.loglog(k, err, "k" + SYMBOLS.get(method, "^") + "-", markersize=6.0, label=method)
        rate = predicted_rate(method, tableau)
        ax.loglog(k, err[0] * (k / k[0]) ** rate, "k--", linewidth=0.8,
                  label=f"$O(k^{{{rate}}})$")
    ax.grid(True, which="both", linewidth=0.3)
    ax.set_xlabel("$k$")
    ax.set_ylabel(r"$\max_j \|e_j\|_{V(1)}$")
    ax.set_title(f"{tableau.name}")
    ax.legend(loc="lower right", fontsize=9)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


__all__ = ["plot_convergence", "predicted_rate"]
