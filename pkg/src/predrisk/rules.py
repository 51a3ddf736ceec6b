"""Predictive density rules: Bayes rules from discrete priors and competitors.

Every density evaluation runs in log space through a single max-shifted
log-sum-exp; components whose shifted weight underflows exp() drop out
naturally (there is no explicit pruning).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .model import DiscretePrior, ModelParams, dumps_17g

_LOG_2PI = math.log(2.0 * math.pi)


def log_normal_pdf(x, mean, variance):
    """Log density of N(mean, variance); broadcasts like numpy."""
    return -0.5 * (_LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)


def logsumexp_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Max-shifted log-sum-exp along one axis, assuming finite entries.

    Leaner than scipy's general version; this sits on the innermost loop of
    every risk evaluation.
    """
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis))
    out += np.squeeze(m, axis=axis)
    return out


@dataclass(frozen=True)
class GaussianMixture:
    """Finite normal mixture with normalized log weights."""

    means: np.ndarray
    variances: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        for name in ("means", "variances", "log_weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.variances <= 0.0):
            raise ValueError("mixture variances must be positive")

    def __len__(self) -> int:
        return self.means.size

    def components(self) -> list[dict]:
        return [
            {"mean": float(m), "variance": float(v), "log_weight": float(w)}
            for m, v, w in zip(self.means, self.variances, self.log_weights)
        ]

    def log_density(self, y) -> np.ndarray | float:
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        terms = self.log_weights[:, None] + log_normal_pdf(
            y_arr[None, :], self.means[:, None], self.variances[:, None]
        )
        out = logsumexp_axis(terms, axis=0)
        return float(out[0]) if np.isscalar(y) or np.ndim(y) == 0 else out

    def to_json(self) -> str:
        return dumps_17g({"components": self.components()})


@dataclass(frozen=True)
class BayesRule:
    """Posterior-predictive density of a discrete spike-and-slab prior."""

    prior: DiscretePrior


@dataclass(frozen=True)
class PluginRule:
    """Gaussian density centred at the hard-thresholded observation."""

    threshold: float

    def __post_init__(self):
        if self.threshold < 0.0:
            raise ValueError("plugin threshold must be nonnegative")


@dataclass(frozen=True)
class ThresholdedClusterRule:
    """Bayes rule of a bounded two-cluster prior inside |x| <= threshold,
    the flat-prior Gaussian N(x, v_x + v_y) outside."""

    inner: DiscretePrior
    threshold: float

    def __post_init__(self):
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class SpikeUniformSlabRule:
    """Spike-and-uniform-slab rule in the wide-slab closed form.

    The finite half-width M enters only the spike/slab posterior weight
    w(x) = (1-eta) phi(x; 0, v_x) / ((1-eta) phi(x; 0, v_x) + eta/(2M));
    the slab predictive component is the flat-prior limit N(x, v_x + v_y).
    """

    slab_half_width: float

    def __post_init__(self):
        if self.slab_half_width <= 0.0:
            raise ValueError("slab half-width must be positive")


PredictiveRule = Union[BayesRule, PluginRule, ThresholdedClusterRule, SpikeUniformSlabRule]


def posterior_predictive(
    prior: DiscretePrior, x: float, params: ModelParams
) -> GaussianMixture:
    """Mixture form of the Bayes predictive density at observed x.

    One N(mu_p, v_y) component per support point, weighted by the posterior
    log pi_p + log phi(x; mu_p, v_x) - log marginal.
    """
    locs = np.concatenate(([0.0], prior.locations()))
    log_pi = np.concatenate(([prior.origin_log_mass], prior.log_weights()))
    log_post = log_pi + log_normal_pdf(x, locs, params.v_x)
    log_post = log_post - logsumexp(log_post)
    variances = np.full(locs.shape, params.v_y)
    return GaussianMixture(locs, variances, log_post)


def _sus_log_spike_weight(x, eta: float, v_x: float, half_width: float):
    """Log posterior spike weight of the spike-uniform-slab rule."""
    log_spike = math.log1p(-eta) + log_normal_pdf(x, 0.0, v_x)
    log_slab = math.log(eta) - math.log(2.0 * half_width)
    log_total = np.logaddexp(log_spike, log_slab)
    return log_spike - log_total, log_slab - log_total


def log_predictive_density_many(
    rule: PredictiveRule, x: float, y: np.ndarray, params: ModelParams
) -> np.ndarray:
    """log p_hat(y | x) evaluated at a vector of y values."""
    y = np.asarray(y, dtype=float)
    if isinstance(rule, BayesRule):
        return np.asarray(posterior_predictive(rule.prior, x, params).log_density(y))
    if isinstance(rule, PluginRule):
        centre = x if abs(x) > rule.threshold else 0.0
        return log_normal_pdf(y, centre, params.v_y)
    if isinstance(rule, ThresholdedClusterRule):
        if abs(x) <= rule.threshold:
            return np.asarray(
                posterior_predictive(rule.inner, x, params).log_density(y)
            )
        return log_normal_pdf(y, x, params.v_x + params.v_y)
    if isinstance(rule, SpikeUniformSlabRule):
        lw_spike, lw_slab = _sus_log_spike_weight(
            x, params.eta, params.v_x, rule.slab_half_width
        )
        spike = lw_spike + log_normal_pdf(y, 0.0, params.v_y)
        slab = lw_slab + log_normal_pdf(y, x, params.v_x + params.v_y)
        return np.logaddexp(spike, slab)
    raise TypeError(f"unknown rule type {type(rule)!r}")


def log_predictive_density(
    rule: PredictiveRule, x: float, y: float, params: ModelParams
) -> float:
    """log p_hat(y | x) for a single (x, y) pair."""
    return float(log_predictive_density_many(rule, x, np.array([y]), params)[0])
