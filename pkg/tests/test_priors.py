import math

import numpy as np
import pytest

from predrisk import (
    build_bigrid_prior,
    build_cluster_prior,
    build_clustered_prior,
    build_estimative_grid_prior,
    build_predictive_grid_prior,
    build_truncated_cluster_prior,
    cluster_size,
    make_params,
)
from predrisk.model import (
    DegenerateSpacingWarning,
    DiscretePrior,
    bigrid_inner_count,
    bigrid_inner_spacing,
    truncated_cluster_size,
)

ALL_BUILDERS = [
    build_clustered_prior,
    build_estimative_grid_prior,
    build_predictive_grid_prior,
    build_bigrid_prior,
    build_truncated_cluster_prior,
]


def assert_mass_accounted(prior: DiscretePrior):
    total = prior.total_log_mass()
    dropped = prior.truncation.dropped_log_mass
    # kept mass = 1 - tail, so |log total| <= -log(1 - exp(dropped))
    assert total <= 1e-12
    if math.isfinite(dropped):
        assert total >= math.log1p(-math.exp(dropped)) - 1e-12
    else:
        assert abs(total) <= 1e-12


def assert_symmetric(prior: DiscretePrior):
    pos = sorted((a.location, a.log_weight) for a in prior.atoms if a.location > 0)
    neg = sorted((-a.location, a.log_weight) for a in prior.atoms if a.location < 0)
    assert pos == neg


@pytest.mark.parametrize("builder", ALL_BUILDERS)
@pytest.mark.parametrize("eta", [0.1, 0.01, 1e-6, 1e-15])
@pytest.mark.parametrize("r", [0.08, 0.25, 0.5, 1.0, 2.0])
def test_mass_symmetry_and_sorting(builder, eta, r):
    p = make_params(eta, r)
    prior = builder(p)
    assert_mass_accounted(prior)
    assert_symmetric(prior)
    locs = prior.locations()
    assert np.all(np.diff(locs) > 1e-12 * p.lambda_e)
    for a in prior.atoms:
        assert math.isfinite(a.log_weight)
        if a.cluster_index != 0:
            assert (a.location > 0) == (a.cluster_index > 0)


# --- cluster size -----------------------------------------------------------

@pytest.mark.parametrize(
    "r,expected",
    [(1.0, 1), (0.5, 1), (2.0, 1), (0.1, 5), (0.25, 3), (0.0654, 8),
     (0.0759, 7), (0.0910, 6), (0.1150, 5), (0.1601, 4), (0.225, 3), (0.4, 2)],
)
def test_cluster_size_values(r, expected):
    assert cluster_size(r) == expected


def test_cluster_size_non_increasing():
    grid = np.arange(0.05, 2.0001, 0.0025)
    sizes = [cluster_size(float(r)) for r in grid]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_cluster_size_domain():
    with pytest.raises(ValueError):
        cluster_size(0.0)


# --- clustered prior geometry ----------------------------------------------

def test_cluster_prior_first_cluster_clipped():
    # gamma=2, kappa=3 at r=0.25: third atom clipped at lambda_e
    p = make_params(0.01, 0.25)
    prior = build_cluster_prior(p, gamma=2.0, kappa=3, max_cluster=5)
    first = [a.location for a in prior.positive_atoms()][:3]
    assert first == pytest.approx(
        [1.3572280848830224, 2.7144561697660448, 3.0348542587702925], rel=1e-13
    )


def test_cluster_prior_kappa_one_spacing():
    # kappa=1 puts single atoms at i*lambda_f regardless of gamma
    p = make_params(0.01, 1.0)
    prior = build_cluster_prior(p, gamma=9.0, kappa=1, max_cluster=6)
    locs = [a.location for a in prior.positive_atoms()]
    assert locs == pytest.approx(
        [i * p.lambda_f for i in range(1, 7)], rel=1e-13
    )


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_clustered_prior_single_atom_per_cluster(r):
    p = make_params(0.01, r)
    prior = build_clustered_prior(p, max_cluster=8)
    locs = [a.location for a in prior.positive_atoms()]
    assert locs == pytest.approx([i * p.lambda_f for i in range(1, 9)], rel=1e-13)


@pytest.mark.parametrize("eta", [0.01, 1e-8])
@pytest.mark.parametrize("r", [0.1, 0.25, 0.45])
def test_clustered_prior_subcritical_geometry(eta, r):
    p = make_params(eta, r)
    k = cluster_size(r)
    prior = build_clustered_prior(p, max_cluster=4)
    pos = [a.location for a in prior.positive_atoms()]
    assert len(pos) == 4 * k
    for i in range(4):
        cluster = pos[i * k : (i + 1) * k]
        # final atom of each cluster lands on the cluster boundary
        assert cluster[-1] == pytest.approx((i + 1) * p.lambda_e, rel=1e-13)
        # within-cluster ratios equal 1+4r except the final clipped gap
        offsets = [loc - i * p.lambda_e for loc in cluster]
        for a, b in zip(offsets[:-2], offsets[1:-1]):
            assert b / a == pytest.approx(1.0 + 4.0 * r, rel=1e-12)
    # within a cluster all atoms carry equal weight
    first_cluster = [a.log_weight for a in prior.atoms if abs(a.cluster_index) == 1]
    assert len(first_cluster) == 2 * k
    assert np.ptp(first_cluster) <= 1e-12


def test_duplicate_atoms_collapse_with_warning():
    p = make_params(0.01, 1.0)
    with pytest.warns(DegenerateSpacingWarning):
        prior = build_cluster_prior(p, gamma=5.0, kappa=3, max_cluster=2)
    # atoms 2 and 3 both clip to lambda_e and merge with doubled weight
    pos = prior.positive_atoms()
    assert len(pos) == 4  # 2 distinct atoms per cluster, 2 clusters
    first = [a for a in pos if a.cluster_index == 1]
    assert first[0].location == pytest.approx(p.lambda_f)
    assert first[1].location == pytest.approx(p.lambda_e)
    assert first[1].log_weight - first[0].log_weight == pytest.approx(math.log(2.0))
    assert_mass_accounted(prior)


# --- grid priors ------------------------------------------------------------

def test_estimative_grid_first_atom_weight():
    p = make_params(0.01, 1.0)
    prior = build_estimative_grid_prior(p, max_cluster=10)
    first = [a for a in prior.positive_atoms()][0]
    assert first.location == pytest.approx(p.lambda_e, rel=1e-14)
    assert math.exp(first.log_weight) == pytest.approx(0.00495, rel=1e-12)


def test_predictive_grid_decay_and_mass():
    p = make_params(0.01, 1.0)
    prior = build_predictive_grid_prior(p, max_atoms=40)
    pos = prior.positive_atoms()
    assert pos[0].location == pytest.approx(p.lambda_f, rel=1e-14)
    ratios = np.diff([a.log_weight for a in pos])
    assert ratios == pytest.approx(
        np.full(len(pos) - 1, p.v * math.log(p.eta)), rel=1e-12
    )
    slab = math.fsum(math.exp(a.log_weight) for a in prior.atoms)
    expected = p.eta * (1.0 - math.exp(p.v * 40 * math.log(p.eta)))
    assert slab == pytest.approx(expected, rel=1e-12)


def test_bigrid_shape_at_r_01():
    assert bigrid_inner_spacing(0.1) == pytest.approx(11.0 / 30.0, rel=1e-15)
    assert bigrid_inner_count(0.1) == 11
    p = make_params(0.01, 0.1)
    prior = build_bigrid_prior(p, max_outer=25)
    pos = prior.positive_atoms()
    b = 11.0 / 30.0
    inner = [p.lambda_f * (1.0 + b * (j - 1)) for j in range(1, 12)]
    assert [a.location for a in pos[:11]] == pytest.approx(inner, rel=1e-13)
    outer_first = pos[11].location
    assert outer_first == pytest.approx(inner[-1] + p.lambda_f, rel=1e-13)


@pytest.mark.parametrize("eta", [0.01, 1e-6])
@pytest.mark.parametrize("r", [0.05, 0.15, 0.3])
def test_bigrid_slab_mass_is_eta(eta, r):
    p = make_params(eta, r)
    prior = build_bigrid_prior(p)
    slab = math.fsum(math.exp(a.log_weight) for a in prior.atoms)
    tail = math.exp(prior.truncation.dropped_log_mass)
    assert slab + tail == pytest.approx(eta, rel=1e-12)


@pytest.mark.parametrize("r", [0.31, 0.5, 1.0, 3.0])
def test_bigrid_equals_predictive_grid_when_b_is_one(r):
    assert bigrid_inner_spacing(r) == 1.0
    p = make_params(0.01, r)
    bg = build_bigrid_prior(p, max_outer=20)
    pg = build_predictive_grid_prior(p, max_atoms=23)
    assert np.allclose(bg.locations(), pg.locations(), rtol=1e-13)
    assert np.allclose(bg.log_weights(), pg.log_weights(), rtol=1e-12)


# --- truncated cluster prior --------------------------------------------------

def test_truncated_cluster_r_1():
    p = make_params(0.01, 1.0)
    prior = build_truncated_cluster_prior(p)
    assert truncated_cluster_size(1.0) == 1
    pos = prior.positive_atoms()
    assert len(pos) == 1
    assert pos[0].location == pytest.approx(p.lambda_f, rel=1e-14)
    assert math.exp(pos[0].log_weight) == pytest.approx(0.005, rel=1e-13)
    assert prior.total_log_mass() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("eta", [0.01, 1e-6])
@pytest.mark.parametrize("r", [0.08, 0.225, 0.45, 1.5])
def test_truncated_cluster_atoms_bounded(eta, r):
    p = make_params(eta, r)
    prior = build_truncated_cluster_prior(p)
    for a in prior.positive_atoms():
        assert p.lambda_f - 1e-12 <= a.location <= p.lambda_e + 1e-12
    assert prior.total_log_mass() == pytest.approx(0.0, abs=1e-12)


# --- serialization -----------------------------------------------------------

@pytest.mark.parametrize("builder", ALL_BUILDERS)
def test_json_round_trip(builder):
    p = make_params(0.001, 0.25)
    prior = builder(p)
    text = prior.to_json(p.eta, p.r)
    back = DiscretePrior.from_json(text)
    assert back == prior
    assert back.to_json(p.eta, p.r) == text  # byte-identical reserialization


def test_json_fields():
    import json

    p = make_params(0.01, 1.0)
    prior = build_clustered_prior(p, max_cluster=3)
    doc = json.loads(prior.to_json(p.eta, p.r))
    assert set(doc) == {"family", "eta", "r", "origin_log_mass", "atoms", "truncation"}
    assert doc["family"] == "C"
    assert set(doc["atoms"][0]) == {"loc", "log_w", "cluster", "within"}
    assert set(doc["truncation"]) == {"max_cluster", "dropped_log_mass"}
