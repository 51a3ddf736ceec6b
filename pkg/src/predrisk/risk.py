"""Exact univariate KL predictive risk by quadrature.

Two independent routes are provided: a one-dimensional route through the
risk identity

    rho(theta) = theta^2 / (2 v_y) - E log N(Z) + E log D(Z)

with N and D spike-normalized exponential mixtures of the prior evaluated at
the combined-statistic variance v*v_x and the past variance v_x respectively,
and a direct tensor-quadrature route integrating the KL loss over the joint
(past, future) distribution.  The identity route is the production path for
Bayes rules; the direct route doubles as its oracle and handles the
non-Bayes competitors.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr, roots_hermite

from .model import DiscretePrior, ModelParams
from .rules import (
    BayesRule,
    PluginRule,
    PredictiveRule,
    SpikeUniformSlabRule,
    ThresholdedClusterRule,
    log_normal_pdf,
    log_predictive_density_many,
    logsumexp_axis,
)

_LOG_2PI = math.log(2.0 * math.pi)
_THREAD_ENV = "PREDRISK_THREADS"


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge; carries the last two estimates."""

    def __init__(self, message: str, estimates: tuple[float, float]):
        super().__init__(message)
        self.estimates = estimates


class BoundarySupWarning(UserWarning):
    """The risk supremum landed near the search boundary (truncation artifact)."""


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "gauss_hermite"
    node_count: int = 201
    rel_tolerance: float = 1e-9

    def __post_init__(self):
        if self.scheme not in ("gauss_hermite", "adaptive"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.node_count < 21:
            raise ValueError("node_count must be at least 21")
        if not (0.0 < self.rel_tolerance <= 1e-4):
            raise ValueError("rel_tolerance must lie in (0, 1e-4]")


DEFAULT_QUADRATURE = QuadratureSpec()


@lru_cache(maxsize=32)
def std_normal_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes rescaled to the standard normal weight."""
    t, w = roots_hermite(n)
    z = t * math.sqrt(2.0)
    wt = w / math.sqrt(math.pi)
    z.flags.writeable = False
    wt.flags.writeable = False
    return z, wt


@lru_cache(maxsize=32)
def _legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    u, w = leggauss(n)
    u.flags.writeable = False
    w.flags.writeable = False
    return u, w


def _parallel_map(fn, items):
    threads = int(os.environ.get(_THREAD_ENV, "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


@dataclass(frozen=True)
class MixtureTerm:
    """One exponential term exp(log_coeff + slope*Z + intercept)."""

    slope: float
    intercept: float
    log_coeff: float = 0.0


def _term_arrays(terms) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(terms, np.ndarray):
        arr = np.asarray(terms, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("term array must have shape (n, 3)")
        return arr[:, 0], arr[:, 1], arr[:, 2]
    slopes, intercepts, coeffs = [], [], []
    for t in terms:
        if isinstance(t, MixtureTerm):
            slopes.append(t.slope)
            intercepts.append(t.intercept)
            coeffs.append(t.log_coeff)
        else:
            s, i, c = t
            slopes.append(s)
            intercepts.append(i)
            coeffs.append(c)
    return (
        np.asarray(slopes, dtype=float),
        np.asarray(intercepts, dtype=float),
        np.asarray(coeffs, dtype=float),
    )


def expect_log_mixture(terms, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E log sum_p exp(log_coeff_p + slope_p Z + intercept_p), Z ~ N(0, 1).

    The integrand grows linearly in Z, so fixed-order Gauss-Hermite against
    the normal weight converges quickly; the adaptive scheme doubles the node
    count until two successive estimates agree to rel_tolerance.
    """
    slope, intercept, log_coeff = _term_arrays(terms)
    if slope.size == 0:
        raise ValueError("expect_log_mixture needs at least one term")

    def value_at(n: int) -> float:
        z, wt = std_normal_nodes(n)
        ex = log_coeff[:, None] + intercept[:, None] + slope[:, None] * z[None, :]
        return float(wt @ logsumexp_axis(ex, axis=0))

    if quad.scheme == "gauss_hermite":
        return value_at(quad.node_count)

    prev = value_at(quad.node_count)
    n = quad.node_count
    for _ in range(8):
        n *= 2
        cur = value_at(n)
        if abs(cur - prev) <= quad.rel_tolerance * max(abs(cur), 1.0):
            return cur
        prev = cur
    raise QuadratureError(
        f"adaptive quadrature did not converge at {n} nodes", (prev, cur)
    )


def _tilt_terms(prior: DiscretePrior, theta: float, w: float) -> np.ndarray:
    """Spike-normalized exponential-mixture coefficients at statistic variance w."""
    locs = prior.locations()
    log_w = prior.log_weights()
    out = np.empty((locs.size + 1, 3))
    out[0] = (0.0, 0.0, 0.0)  # the unit spike term
    out[1:, 0] = locs / math.sqrt(w)
    out[1:, 1] = locs * theta / w - locs**2 / (2.0 * w)
    out[1:, 2] = log_w - prior.origin_log_mass
    return out


def risk_decomposition(
    prior: DiscretePrior,
    theta: float,
    params: ModelParams,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """KL predictive risk of the prior's Bayes rule via the risk identity.

    Requires positive spike mass (the identity normalizes by it).  The
    combined sufficient statistic of (past, future) has variance v*v_x,
    the past observation alone variance v_x.
    """
    if not math.isfinite(prior.origin_log_mass):
        raise ValueError("risk identity requires positive spike mass at the origin")
    e_combined = expect_log_mixture(
        _tilt_terms(prior, theta, params.v * params.v_x), quad
    )
    e_past = expect_log_mixture(_tilt_terms(prior, theta, params.v_x), quad)
    return theta**2 / (2.0 * params.v_y) - e_combined + e_past


def _plugin_risk(rule: PluginRule, theta: float, params: ModelParams) -> float:
    """Closed form E(theta - thetahat(X))^2 / (2 v_y) via truncated moments."""
    t = rule.threshold
    sigma = math.sqrt(params.v_x)
    a = (t - theta) / sigma
    b = (-t - theta) / sigma
    phi_a = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    phi_b = math.exp(-0.5 * b * b) / math.sqrt(2.0 * math.pi)
    p_in = ndtr(a) - ndtr(b)
    # E[Z^2 1{Z <= b}] + E[Z^2 1{Z >= a}]
    ez2_out = (ndtr(b) - b * phi_b) + (1.0 - ndtr(a) + a * phi_a)
    mse = theta**2 * p_in + params.v_x * ez2_out
    return mse / (2.0 * params.v_y)


def _thresholded_cluster_risk(
    rule: ThresholdedClusterRule,
    theta: float,
    params: ModelParams,
    quad: QuadratureSpec,
) -> float:
    """Piecewise evaluation: the past integral splits at |x| = threshold where
    the rule switches, so each piece is integrated on its own smooth domain."""
    t = rule.threshold
    v_x, v_y = params.v_x, params.v_y
    big_v = v_x + v_y
    sigma = math.sqrt(v_x)
    a = (t - theta) / sigma
    b = (-t - theta) / sigma
    phi_a = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    phi_b = math.exp(-0.5 * b * b) / math.sqrt(2.0 * math.pi)
    p_out = ndtr(b) + 1.0 - ndtr(a)
    ez2_out = (ndtr(b) - b * phi_b) + (1.0 - ndtr(a) + a * phi_a)
    # KL(N(theta, v_y) || N(x, v_x + v_y)) integrated over |x| > t in closed form
    outer = 0.5 * (
        math.log(big_v / v_y) * p_out
        + (v_y * p_out + v_x * ez2_out) / big_v
        - p_out
    )

    u, gw = _legendre_nodes(quad.node_count)
    xs = u * t
    dens = np.exp(log_normal_pdf(xs, theta, v_x))
    z, wt = std_normal_nodes(quad.node_count)
    ys = theta + math.sqrt(v_y) * z
    const = -0.5 * (1.0 + _LOG_2PI + math.log(v_y))
    e_y = _bayes_mean_log_predictive(rule.inner, xs, ys, wt, params)
    inner = t * float(gw @ (dens * (const - e_y)))
    return inner + outer


def _bayes_mean_log_predictive(
    prior: DiscretePrior,
    xs: np.ndarray,
    ys: np.ndarray,
    y_weights: np.ndarray,
    params: ModelParams,
    block: int = 64,
) -> np.ndarray:
    """E_Y log p_hat(Y | x) of a prior's Bayes rule for each x in xs."""
    locs = np.concatenate(([0.0], prior.locations()))
    log_pi = np.concatenate(([prior.origin_log_mass], prior.log_weights()))
    log_y = log_normal_pdf(ys[None, :], locs[:, None], params.v_y)  # (P, ny)
    out = np.empty(xs.size)
    for i0 in range(0, xs.size, block):
        xb = xs[i0 : i0 + block]
        post = log_pi[None, :] + log_normal_pdf(xb[:, None], locs[None, :], params.v_x)
        post -= logsumexp_axis(post, axis=1)[:, None]
        log_p = logsumexp_axis(post[:, :, None] + log_y[None, :, :], axis=1)
        out[i0 : i0 + block] = log_p @ y_weights
    return out


def _sus_risk(
    rule: SpikeUniformSlabRule,
    theta: float,
    params: ModelParams,
    quad: QuadratureSpec,
) -> float:
    from .rules import _sus_log_spike_weight

    z, wt = std_normal_nodes(quad.node_count)
    xs = theta + math.sqrt(params.v_x) * z
    ys = theta + math.sqrt(params.v_y) * z
    lw_spike, lw_slab = _sus_log_spike_weight(
        xs, params.eta, params.v_x, rule.slab_half_width
    )
    spike = lw_spike[:, None] + log_normal_pdf(ys[None, :], 0.0, params.v_y)
    slab = lw_slab[:, None] + log_normal_pdf(
        ys[None, :], xs[:, None], params.v_x + params.v_y
    )
    log_p = np.logaddexp(spike, slab)
    e_log = float(wt @ (log_p @ wt))
    return -0.5 * (1.0 + _LOG_2PI + math.log(params.v_y)) - e_log


def risk_direct(
    rule: PredictiveRule,
    theta: float,
    params: ModelParams,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """KL predictive risk by direct integration over (past, future).

    Plugin rules reduce to a closed-form mean squared error; the thresholded
    rule is integrated piecewise around its switching boundary; everything
    else goes through the tensorized Gauss-Hermite double integral.
    """
    if isinstance(rule, PluginRule):
        return _plugin_risk(rule, theta, params)
    if isinstance(rule, ThresholdedClusterRule):
        return _thresholded_cluster_risk(rule, theta, params, quad)
    if isinstance(rule, SpikeUniformSlabRule):
        return _sus_risk(rule, theta, params, quad)

    z, wt = std_normal_nodes(quad.node_count)
    xs = theta + math.sqrt(params.v_x) * z
    ys = theta + math.sqrt(params.v_y) * z
    if isinstance(rule, BayesRule):
        e_log = float(wt @ _bayes_mean_log_predictive(rule.prior, xs, ys, wt, params))
    else:
        e_log = 0.0
        for w_i, x in zip(wt, xs):
            vals = log_predictive_density_many(rule, float(x), ys, params)
            e_log += w_i * float(wt @ vals)
    return -0.5 * (1.0 + _LOG_2PI + math.log(params.v_y)) - e_log


def predictive_risk(
    rule: PredictiveRule,
    theta: float,
    params: ModelParams,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Risk of any rule at one location: identity route for Bayes rules,
    direct quadrature otherwise."""
    if isinstance(rule, BayesRule):
        return risk_decomposition(rule.prior, theta, params, quad)
    return risk_direct(rule, theta, params, quad)


def benchmark_risk(params: ModelParams) -> float:
    """The per-signal worst-case limit lambda_f^2 / (2 r v_x) = log(1/eta)/(1+r)."""
    return params.lambda_f**2 / (2.0 * params.r * params.v_x)


@dataclass(frozen=True)
class SearchSpec:
    theta_max: float | None = None
    coarse_step: float | None = None
    refine_tol: float = 1e-4
    strict: bool = False

    def resolve(self, params: ModelParams) -> tuple[float, float, float]:
        theta_max = self.theta_max
        if theta_max is None:
            theta_max = 4.0 * params.lambda_e + params.lambda_f
        step = self.coarse_step
        if step is None:
            step = params.lambda_f / 20.0
        return theta_max, step, self.refine_tol * params.lambda_f


@dataclass(frozen=True)
class RiskProfile:
    """Risk curve over a theta grid with the located supremum."""

    theta_grid: np.ndarray
    risk_values: np.ndarray
    benchmark: float
    sup_theta: float
    sup_risk: float
    boundary_hit: bool = False

    def to_csv(self) -> str:
        lines = ["theta,risk,benchmark"]
        for t, v in zip(self.theta_grid, self.risk_values):
            lines.append(
                f"{format(t, '.17g')},{format(v, '.17g')},"
                f"{format(self.benchmark, '.17g')}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "RiskProfile":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        thetas = np.array([float(r[0]) for r in rows])
        risks = np.array([float(r[1]) for r in rows])
        benchmark = float(rows[0][2]) if rows else math.nan
        idx = int(np.argmax(risks))
        return RiskProfile(
            thetas, risks, benchmark, float(thetas[idx]), float(risks[idx])
        )


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, a: float, b: float, tol: float) -> list[tuple[float, float]]:
    """Golden-section maximization of f on [a, b]; returns evaluated points.

    Ties move the bracket right so the leftmost maximizer survives.
    """
    pts: list[tuple[float, float]] = []

    def ev(x: float) -> float:
        y = f(x)
        pts.append((x, y))
        return y

    h = b - a
    c = b - _INVPHI * h
    d = a + _INVPHI * h
    yc, yd = ev(c), ev(d)
    while h > tol:
        if yc >= yd:
            b, d, yd = d, c, yc
            h = b - a
            c = b - _INVPHI * h
            yc = ev(c)
        else:
            a, c, yc = c, d, yd
            h = b - a
            d = a + _INVPHI * h
            yd = ev(d)
    return pts


def sup_risk(
    rule: PredictiveRule,
    params: ModelParams,
    search: SearchSpec | None = None,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> RiskProfile:
    """Worst-case risk over theta >= 0 (symmetric rules): coarse scan plus
    golden-section refinement of every interior local maximum.

    A supremum within lambda_f of theta_max is flagged as a likely prior
    truncation artifact: warning by default, error under strict.
    """
    spec = search or SearchSpec()
    theta_max, step, tol = spec.resolve(params)
    n_steps = max(int(math.ceil(theta_max / step)), 8)
    grid = np.linspace(0.0, theta_max, n_steps + 1)

    def f(theta: float) -> float:
        return predictive_risk(rule, theta, params, quad)

    vals = np.array(_parallel_map(f, grid.tolist()))

    points: list[tuple[float, float]] = list(zip(grid.tolist(), vals.tolist()))
    # Refinement can lift a coarse value by at most O(curvature * step^2), so
    # only local maxima already close to the coarse best can become the sup.
    band = np.max(vals) - 0.02 * (abs(np.max(vals)) + 1.0)
    for i in range(1, len(grid) - 1):
        if vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1] and vals[i] >= band:
            points.extend(_golden_max(f, grid[i - 1], grid[i + 1], tol))

    points.sort(key=lambda p: p[0])
    thetas = np.array([p[0] for p in points])
    risks = np.array([p[1] for p in points])
    keep = np.concatenate(([True], np.diff(thetas) > 0.0))
    thetas, risks = thetas[keep], risks[keep]

    idx = int(np.argmax(risks))  # first occurrence: leftmost maximizer
    sup_theta, sup_value = float(thetas[idx]), float(risks[idx])

    boundary = sup_theta > theta_max - params.lambda_f
    if boundary:
        msg = (
            f"risk supremum at theta={sup_theta:.6g} lies within lambda_f of "
            f"theta_max={theta_max:.6g}; increase theta_max or max_cluster"
        )
        if spec.strict:
            raise RuntimeError(msg)
        warnings.warn(msg, BoundarySupWarning, stacklevel=2)

    return RiskProfile(
        thetas, risks, benchmark_risk(params), sup_theta, sup_value, boundary
    )


@dataclass(frozen=True)
class OriginRisk:
    value: float
    bound: float  # analytic bound eta / (1 - eta)


def origin_risk(
    prior: DiscretePrior,
    params: ModelParams,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> OriginRisk:
    """Risk of the prior's Bayes rule at theta = 0, with the analytic bound."""
    value = risk_decomposition(prior, 0.0, params, quad)
    return OriginRisk(value, params.eta / (1.0 - params.eta))


@dataclass(frozen=True)
class BayesRiskResult:
    value: float
    tail_bound: float  # bound on the contribution of truncated atoms


def bayes_risk(
    prior: DiscretePrior,
    params: ModelParams,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> BayesRiskResult:
    """Average risk of the prior's Bayes rule under the prior itself.

    Sums the actual (truncated) prior measure: spike times origin risk plus,
    by symmetry, twice the positive atoms' weighted risks.
    """
    pos = prior.positive_atoms()
    neg = {(-a.location, a.log_weight) for a in prior.atoms if a.location < 0.0}
    if {(a.location, a.log_weight) for a in pos} != neg:
        raise ValueError("bayes_risk requires a symmetric prior")

    total = prior.spike_mass * risk_decomposition(prior, 0.0, params, quad)
    max_rho = benchmark_risk(params)
    for atom in pos:
        rho = risk_decomposition(prior, atom.location, params, quad)
        max_rho = max(max_rho, rho)
        total += 2.0 * math.exp(atom.log_weight) * rho
    tail = math.exp(prior.truncation.dropped_log_mass) * max_rho
    return BayesRiskResult(total, tail)


@dataclass(frozen=True)
class MultivariateRisk:
    total: float
    ratio_to_benchmark: float
    origin_value: float
    profile: RiskProfile


def multivariate_max_risk(
    n: int,
    s_n: int,
    rule: PredictiveRule,
    params: ModelParams,
    search: SearchSpec | None = None,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> MultivariateRisk:
    """Worst-case risk over n-vectors with at most s_n nonzero coordinates:
    n(1-eta) times the origin risk plus n*eta times the univariate supremum."""
    if not 1 <= s_n < n:
        raise ValueError(f"need 1 <= s_n < n, got s_n={s_n}, n={n}")
    eta = s_n / n
    if eta > 0.5:
        raise ValueError(f"sparsity fraction s_n/n = {eta} exceeds 0.5")
    if not math.isclose(params.eta, eta, rel_tol=1e-12):
        raise ValueError("params.eta must equal s_n / n")

    origin = predictive_risk(rule, 0.0, params, quad)
    profile = sup_risk(rule, params, search, quad)
    total = n * (1.0 - eta) * origin + n * eta * profile.sup_risk
    per_signal = math.log(1.0 / eta) / (1.0 + params.r)
    ratio = total / (n * eta * per_signal)
    return MultivariateRisk(total, ratio, origin, profile)
