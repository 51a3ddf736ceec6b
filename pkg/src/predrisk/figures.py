"""Matplotlib rendering of risk profiles alongside the delimited output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .model import DiscretePrior, ModelParams
from .risk import RiskProfile


def render_profile(
    profile: RiskProfile,
    params: ModelParams,
    path: str,
    prior: DiscretePrior | None = None,
    title: str | None = None,
) -> None:
    """Risk curve with the benchmark line and dotted atom-location markers;
    cluster boundaries (multiples of lambda_e) are drawn bold."""
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ax.plot(profile.theta_grid, profile.risk_values, color="C0", lw=1.2)
    ax.axhline(profile.benchmark, color="C3", lw=1.0, label="benchmark")

    theta_hi = float(profile.theta_grid[-1])
    if prior is not None:
        locs = [a.location for a in prior.positive_atoms() if a.location <= theta_hi]
        for loc in locs:
            ax.axvline(loc, color="0.6", lw=0.6, ls=":")
    k = 1
    while k * params.lambda_e <= theta_hi:
        ax.axvline(k * params.lambda_e, color="0.3", lw=1.0, ls="--")
        k += 1

    ax.plot([profile.sup_theta], [profile.sup_risk], "o", ms=4, color="C1")
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("KL predictive risk")
    ax.set_xlim(0.0, theta_hi)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
