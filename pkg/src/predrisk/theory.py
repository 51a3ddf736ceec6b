"""Closed-form benchmarks and structural design checks.

Everything here is an exact finite formula: the worst-case risk asymptote,
the limiting Bayes-to-minimax ratio of the clustered prior, the dominant-term
index functions of the risk identity, and the quadratic-root coverage
analysis that certifies the cluster spacing design for r below one half.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import ModelParams, cluster_size, make_params


@dataclass(frozen=True)
class MinimaxAsymptote:
    per_signal: float  # log(1/eta) / (1 + r)
    threshold: float  # lambda_f^2 / (2 r), identical by algebra


def minimax_asymptote(eta: float, r: float) -> MinimaxAsymptote:
    """First-order worst-case risk per nonzero signal; the two equivalent
    closed forms are computed independently and cross-checked."""
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    per_signal = math.log(1.0 / eta) / (1.0 + r)
    v = r / (1.0 + r)
    lambda_f_sq = v * 2.0 * math.log(1.0 / eta)
    threshold = lambda_f_sq / (2.0 * r)
    if not math.isclose(per_signal, threshold, rel_tol=1e-12):
        raise RuntimeError("asymptote identity violated; check inputs")
    return MinimaxAsymptote(per_signal, threshold)


def bayes_minimax_ratio_limit(r: float) -> float:
    """Limiting ratio of the clustered prior's Bayes risk to the minimax risk:
    (1/K) { 1 + r * sum_i (1 + 1/r - (1+4r)^(2i))_+ }, an exact finite sum."""
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    k = cluster_size(r)
    total = 0.0
    i = 1
    while True:
        term = 1.0 + 1.0 / r - (1.0 + 4.0 * r) ** (2 * i)
        if term <= 0.0:
            break
        total += term
        i += 1
    return (1.0 + r * total) / k


def per_atom_asymptotic_risk(j: int, r: float) -> float:
    """Leading risk coefficient (in lambda_f^2 units) at the j-th first-cluster
    atom: 1/(2r) at j = 1, else (1/2)(1 + 1/r - (1+4r)^(2(j-1)))_+."""
    k = cluster_size(r)
    if not 1 <= j <= k:
        raise ValueError(f"j must lie in 1..{k} for r={r}, got {j}")
    if j == 1:
        return 1.0 / (2.0 * r)
    return 0.5 * max(1.0 + 1.0 / r - (1.0 + 4.0 * r) ** (2 * (j - 1)), 0.0)


def _require_subcritical(params: ModelParams) -> None:
    if params.r >= 0.5:
        raise ValueError("index functions are defined for r < 0.5 only")


def peak_index_past(theta: float, params: ModelParams) -> int:
    """Index (in the flattened positive-atom order) of the term dominating the
    past-observation mixture at location theta: jK on [j*lambda_e, (j+1)*lambda_e)."""
    _require_subcritical(params)
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    k = cluster_size(params.r)
    j = int(math.floor(theta / params.lambda_e))
    return j * k


def peak_index_combined(theta: float, params: ModelParams) -> int:
    """Index of the term dominating the combined-statistic mixture at theta.

    Case layout within the cluster starting at j*lambda_e, with within-cluster
    locations lambda_f * (1+4r)^k clipped at lambda_e:
      (i)   [j*lambda_e, j*lambda_e + lambda_f]            -> jK
      (ii)  (atom_k, min(atom_k*(1+2r), cluster end)]      -> jK + k + 1
      (iii) (atom_k*(1+2r), min(atom_{k+1}, cluster end)]  -> jK + k + 2
    """
    _require_subcritical(params)
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    k_size = cluster_size(params.r)
    le, lf = params.lambda_e, params.lambda_f
    gamma = 1.0 + 4.0 * params.r
    mid = 1.0 + 2.0 * params.r
    j = int(math.floor(theta / le))
    t = theta - j * le
    if t <= lf:
        return j * k_size
    # shared endpoint expressions keep consecutive intervals crack-free
    powers = [lf * gamma**k for k in range(k_size + 1)]
    for k in range(k_size):
        switch = powers[k] * mid
        if powers[k] < t <= min(switch, le):
            return j * k_size + k + 1
        if switch < t <= min(powers[k + 1], le):
            return j * k_size + k + 2
    # unreachable for t in (lambda_f, lambda_e]; defensive fallthrough
    return (j + 1) * k_size


@dataclass(frozen=True)
class RootInterval:
    """Quadratic-root interval [alpha, beta] that must cover the theta range
    [target_lo, target_hi] where the indexed atom dominates."""

    index: int
    alpha: float
    beta: float
    target_lo: float
    target_hi: float
    covered: bool


def _coverage_roots(mu: float, mu_base: float, params: ModelParams):
    """Roots of the risk-identity quadratic for dominant atom mu against base
    atom mu_base one cluster below; None when the discriminant is negative."""
    r, v = params.r, params.v
    gap = mu - mu_base
    disc = gap**2 / v - params.lambda_f**2 / r
    if disc < 0.0:
        return None
    root = r * math.sqrt(disc)
    centre = mu + r * gap
    return centre - root, centre + root


def cluster_coverage_check(r: float, eta: float) -> list[RootInterval]:
    """Certify the clustered design on the first cluster: for each atom k the
    theta interval where it dominates must sit inside its root interval.

    An empty dominance interval is trivially covered; a negative discriminant
    is reported as an uncovered interval with NaN roots.
    """
    if not (0.0 < r < 0.5):
        raise ValueError(f"coverage check is defined for 0 < r < 0.5, got r={r}")
    params = make_params(eta, r)
    k_size = cluster_size(r)
    le, lf = params.lambda_e, params.lambda_f
    gamma = 1.0 + 4.0 * r
    mid = 1.0 + 2.0 * r
    mus = [min(lf * gamma**k, le) for k in range(k_size)]

    tol = 1e-9 * lf
    out: list[RootInterval] = []
    for k in range(1, k_size + 1):
        mu = mus[k - 1]
        lo = lf if k == 1 else mus[k - 2] * mid
        hi = min(mu * mid, le) if k < k_size else le
        roots = _coverage_roots(mu, 0.0, params)
        if roots is None:
            out.append(RootInterval(k, math.nan, math.nan, lo, hi, False))
            continue
        alpha, beta = roots
        covered = lo >= hi or (alpha <= lo + tol and beta >= hi - tol)
        out.append(RootInterval(k, alpha, beta, lo, hi, covered))
    return out


@dataclass(frozen=True)
class UnitClusterGap:
    """Gap analysis of the one-atom-per-cluster design below the 0.5 cutoff."""

    dominance_switch: float  # offset lambda_f / (2r) past each atom
    roots: tuple[RootInterval, ...]
    gap_exists: bool


def unit_cluster_gap_analysis(r: float, eta: float) -> UnitClusterGap:
    """Roots of the risk quadratic for the forced single-atom grid (spacing
    lambda_f).  For r < 0.5 the first two root intervals leave a gap
    (beta_1 < alpha_2) where the risk exceeds the benchmark; at r = 0.5 the
    intervals touch exactly, and above they overlap."""
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    params = make_params(eta, r)
    lf = params.lambda_f
    window_lo = lf / (2.0 * r)
    window_hi = lf * (1.0 + 1.0 / (2.0 * r))

    roots: list[RootInterval] = []
    degenerate = False
    for n in (1, 2):
        rad = n * n * r * r + n * n * r - n * r - n + 1.0
        lo = max(n * lf - lf / 2.0, window_lo)
        hi = min(n * lf + lf / 2.0, window_hi)
        if rad < 0.0:
            # no real roots: the quadratic is negative on the whole window
            roots.append(RootInterval(n, math.nan, math.nan, lo, hi, False))
            degenerate = True
            continue
        centre = (1.0 + r) * n * lf
        half = lf * math.sqrt(rad)
        alpha, beta = centre - half, centre + half
        covered = lo >= hi or (alpha <= lo and beta >= hi)
        roots.append(RootInterval(n, alpha, beta, lo, hi, covered))

    if r >= 0.5:
        gap = False
    elif degenerate:
        gap = True
    else:
        gap = roots[0].beta < roots[1].alpha - 1e-12 * lf
    return UnitClusterGap(lf / (2.0 * r), tuple(roots), gap)
