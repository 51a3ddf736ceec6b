import math

import numpy as np
import pytest
from scipy.integrate import quad

from predrisk import (
    BayesRule,
    PluginRule,
    SpikeUniformSlabRule,
    ThresholdedClusterRule,
    build_clustered_prior,
    build_truncated_cluster_prior,
    log_predictive_density,
    make_params,
    posterior_predictive,
)
from predrisk.model import pure_spike_prior
from predrisk.rules import log_normal_pdf, log_predictive_density_many


def test_pure_spike_predictive():
    p = make_params(0.01, 1.0)
    for x in (-3.0, 0.0, 7.5):
        mix = posterior_predictive(pure_spike_prior(), x, p)
        assert len(mix) == 1
        assert mix.means[0] == 0.0
        assert mix.variances[0] == p.v_y
        assert mix.log_weights[0] == pytest.approx(0.0, abs=1e-14)


def test_posterior_symmetry_at_zero():
    p = make_params(0.01, 0.25)
    mix = posterior_predictive(build_clustered_prior(p), 0.0, p)
    for mu, lw in zip(mix.means, mix.log_weights):
        if mu <= 0:
            continue
        j = np.argmin(np.abs(mix.means + mu))
        assert lw == pytest.approx(mix.log_weights[j], rel=1e-12)


def test_posterior_normalized():
    p = make_params(1e-6, 0.1)
    for x in (0.0, 1.3, 4.0 * p.lambda_e):
        mix = posterior_predictive(build_clustered_prior(p), x, p)
        total = np.logaddexp.reduce(mix.log_weights)
        assert abs(total) <= 1e-10


def test_posterior_mode_matches_brute_force():
    # at x = 5 lambda_f the loaded component is NOT the nearest atom: the
    # geometric weight decay outweighs the likelihood gain of one lambda_f step
    p = make_params(0.01, 1.0)
    prior = build_clustered_prior(p, max_cluster=10)
    x = 5.0 * p.lambda_f
    mix = posterior_predictive(prior, x, p)
    # brute force in linear space over every component
    brute = [
        math.exp(lw) * math.exp(-0.5 * (x - mu) ** 2 / p.v_x)
        for mu, lw in zip(
            np.concatenate(([0.0], prior.locations())),
            np.concatenate(([prior.origin_log_mass], prior.log_weights())),
        )
    ]
    mode = mix.means[int(np.argmax(mix.log_weights))]
    assert mode == pytest.approx(
        np.concatenate(([0.0], prior.locations()))[int(np.argmax(brute))], rel=1e-13
    )
    assert mode == pytest.approx(4.0 * p.lambda_f, rel=1e-12)


def _rules(p):
    return {
        "bayes": BayesRule(build_clustered_prior(p)),
        "plugin": PluginRule(p.lambda_e),
        "thresh": ThresholdedClusterRule(build_truncated_cluster_prior(p), p.lambda_e),
        "sus": SpikeUniformSlabRule(2.0 * p.lambda_e),
    }


@pytest.mark.parametrize("name", ["bayes", "plugin", "thresh", "sus"])
@pytest.mark.parametrize("x", [0.0, 0.7, 2.5, 6.0])
def test_density_integrates_to_one(name, x):
    p = make_params(0.01, 0.5)
    rule = _rules(p)[name]
    hi = abs(x) + 12.0 * p.lambda_e

    def f(y):
        return math.exp(log_predictive_density(rule, x, y, p))

    total, err = quad(f, -hi, hi, limit=300, epsabs=1e-11, epsrel=1e-11)
    assert total == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("name", ["bayes", "plugin", "thresh", "sus"])
def test_density_symmetry(name):
    p = make_params(0.01, 0.5)
    rule = _rules(p)[name]
    for x, y in [(0.4, 1.0), (2.2, -0.3), (5.0, 4.0)]:
        assert log_predictive_density(rule, x, y, p) == pytest.approx(
            log_predictive_density(rule, -x, -y, p), rel=1e-12
        )


def test_plugin_below_threshold_is_centered_gaussian():
    p = make_params(0.01, 1.0)
    rule = PluginRule(p.lambda_f)
    x = 0.1 * p.lambda_f
    for y in (-2.0, 0.0, 1.3):
        assert log_predictive_density(rule, x, y, p) == pytest.approx(
            float(log_normal_pdf(y, 0.0, p.v_y)), rel=1e-14
        )


def test_sus_wide_slab_limit_is_flat_prior_gaussian():
    # slab weight -> 1 when the spike carries almost no prior mass
    p = make_params(1.0 - 1e-12, 1.0)
    rule = SpikeUniformSlabRule(30.0)
    for x, y in [(0.5, 0.2), (2.0, -1.0)]:
        assert log_predictive_density(rule, x, y, p) == pytest.approx(
            float(log_normal_pdf(y, x, p.v_x + p.v_y)), abs=1e-9
        )


def test_bayes_log_density_against_linear_space_sum():
    p = make_params(0.01, 1.0)
    prior = build_clustered_prior(p)
    val = log_predictive_density(BayesRule(prior), 0.0, 0.0, p)
    mix = posterior_predictive(prior, 0.0, p)
    linear = math.fsum(
        math.exp(lw) * math.exp(float(log_normal_pdf(0.0, mu, p.v_y)))
        for mu, lw in zip(mix.means, mix.log_weights)
    )
    assert val == pytest.approx(math.log(linear), rel=1e-12)


def test_bayes_density_continuous_in_x():
    p = make_params(0.01, 0.25)
    rule = BayesRule(build_clustered_prior(p))
    y = 1.0
    xs = np.linspace(0.0, 3.0 * p.lambda_e, 80)
    for delta in (1e-3, 1e-6):
        diffs = [
            abs(
                log_predictive_density(rule, float(x) + delta, y, p)
                - log_predictive_density(rule, float(x), y, p)
            )
            for x in xs
        ]
        assert max(diffs) < 60.0 * delta * p.lambda_e  # Lipschitz-scaled bound


def test_thresholded_rule_jumps_at_boundary():
    p = make_params(0.01, 0.25)
    rule = ThresholdedClusterRule(build_truncated_cluster_prior(p), p.lambda_e)
    y = 0.5
    below = log_predictive_density(rule, p.lambda_e * (1.0 - 1e-9), y, p)
    above = log_predictive_density(rule, p.lambda_e * (1.0 + 1e-9), y, p)
    assert abs(above - below) > 0.1


def test_vectorized_matches_scalar():
    p = make_params(0.001, 0.5)
    ys = np.array([-1.0, 0.0, 2.5])
    for rule in _rules(p).values():
        vec = log_predictive_density_many(rule, 1.1, ys, p)
        scalar = [log_predictive_density(rule, 1.1, float(y), p) for y in ys]
        assert np.allclose(vec, scalar, rtol=1e-13)


def test_mixture_json_dump():
    import json

    p = make_params(0.01, 1.0)
    mix = posterior_predictive(build_clustered_prior(p, max_cluster=2), 1.0, p)
    doc = json.loads(mix.to_json())
    assert len(doc["components"]) == len(mix)
    assert set(doc["components"][0]) == {"mean", "variance", "log_weight"}


def test_rule_validation():
    p = make_params(0.01, 1.0)
    with pytest.raises(ValueError):
        PluginRule(-1.0)
    with pytest.raises(ValueError):
        SpikeUniformSlabRule(0.0)
    with pytest.raises(ValueError):
        ThresholdedClusterRule(build_truncated_cluster_prior(p), 0.0)
