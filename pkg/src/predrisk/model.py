"""Problem parameters and discrete spike-and-slab prior constructions.

All prior weights are kept in natural-log space throughout: sparsity levels
down to 1e-15 make linear-space weights underflow long before the atoms stop
mattering.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

# Family labels used in serialized priors (stable external names).
FAMILY_CLUSTER = "CL"
FAMILY_CLUSTERED = "C"
FAMILY_ESTIMATIVE_GRID = "EG"
FAMILY_PREDICTIVE_GRID = "PG"
FAMILY_BIGRID = "BG"
FAMILY_TRUNCATED_CLUSTER = "TC"

# Truncation: keep clusters until the dropped slab mass has log below this.
_TAIL_LOG_MASS = -60.0
# Default priors must carry atoms out to this many lambda_e units so the
# default worst-case search window (4*lambda_e + lambda_f) keeps a two-period
# safety margin before the last atom.
_COVERAGE_LAMBDA_E = 7.0


class DegenerateSpacingWarning(UserWarning):
    """Two within-cluster atoms collided after clipping and were merged."""


@dataclass(frozen=True)
class ModelParams:
    """Sparsity/variance configuration for one univariate problem instance.

    eta is the expected fraction of nonzero coordinates, r = v_y/v_x the
    future-to-past variance ratio.  Derived constants: v = r/(1+r),
    lambda_e = sqrt(2 v_x log(1/eta)) (estimation spacing scale) and
    lambda_f = sqrt(v) * lambda_e (prediction spacing scale).
    """

    eta: float
    r: float
    v_x: float = 1.0
    v_y: float = field(init=False)
    v: float = field(init=False)
    lambda_e: float = field(init=False)
    lambda_f: float = field(init=False)

    def __post_init__(self) -> None:
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if not self.r > 0.0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.v_x > 0.0:
            raise ValueError(f"v_x must be positive, got {self.v_x}")
        object.__setattr__(self, "v_y", self.r * self.v_x)
        object.__setattr__(self, "v", self.r / (1.0 + self.r))
        object.__setattr__(
            self, "lambda_e", math.sqrt(2.0 * self.v_x * math.log(1.0 / self.eta))
        )
        object.__setattr__(self, "lambda_f", math.sqrt(self.v) * self.lambda_e)

    @property
    def log_eta(self) -> float:
        return math.log(self.eta)


def make_params(eta: float, r: float, v_x: float = 1.0) -> ModelParams:
    """Validate (eta, r, v_x) and compute every derived constant."""
    return ModelParams(eta=eta, r=r, v_x=v_x)


@dataclass(frozen=True)
class Atom:
    """One signed support point of a discrete prior.

    cluster_index is the signed cluster label (sign matches the location),
    within_index the 1-based position inside the cluster.
    """

    location: float
    log_weight: float
    cluster_index: int
    within_index: int


@dataclass(frozen=True)
class Truncation:
    max_cluster: int
    dropped_log_mass: float  # log of an upper bound on the omitted mass


@dataclass(frozen=True)
class DiscretePrior:
    """Spike mass at the origin plus a finite symmetric list of atoms."""

    origin_log_mass: float
    atoms: tuple[Atom, ...]
    family: str
    truncation: Truncation

    @property
    def spike_mass(self) -> float:
        return math.exp(self.origin_log_mass)

    def locations(self) -> np.ndarray:
        return np.array([a.location for a in self.atoms], dtype=float)

    def log_weights(self) -> np.ndarray:
        return np.array([a.log_weight for a in self.atoms], dtype=float)

    def positive_atoms(self) -> tuple[Atom, ...]:
        return tuple(a for a in self.atoms if a.location > 0.0)

    def total_log_mass(self) -> float:
        """Log of spike mass plus all atom masses (should be ~log 1)."""
        vals = np.concatenate(([self.origin_log_mass], self.log_weights()))
        return float(logsumexp(vals))

    def to_json_dict(self, eta: float, r: float) -> dict:
        return {
            "family": self.family,
            "eta": eta,
            "r": r,
            "origin_log_mass": self.origin_log_mass,
            "atoms": [
                {
                    "loc": a.location,
                    "log_w": a.log_weight,
                    "cluster": a.cluster_index,
                    "within": a.within_index,
                }
                for a in self.atoms
            ],
            "truncation": {
                "max_cluster": self.truncation.max_cluster,
                "dropped_log_mass": self.truncation.dropped_log_mass,
            },
        }

    def to_json(self, eta: float, r: float) -> str:
        return dumps_17g(self.to_json_dict(eta, r))

    @staticmethod
    def from_json(text: str) -> "DiscretePrior":
        d = json.loads(text)
        atoms = tuple(
            Atom(a["loc"], a["log_w"], int(a["cluster"]), int(a["within"]))
            for a in d["atoms"]
        )
        trunc = Truncation(
            int(d["truncation"]["max_cluster"]),
            float(d["truncation"]["dropped_log_mass"]),
        )
        return DiscretePrior(float(d["origin_log_mass"]), atoms, d["family"], trunc)


def _fmt17(x: float) -> str:
    """Format a float with 17 significant digits (round-trip exact)."""
    if x == math.inf:
        return "Infinity"
    if x == -math.inf:
        return "-Infinity"
    return format(x, ".17g")


def _dump_value(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _fmt17(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        inner = ", ".join(f"{json.dumps(k)}: {_dump_value(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump_value(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_17g(obj) -> str:
    """Deterministic JSON with floats printed at 17 significant digits."""
    return _dump_value(obj)


def cluster_size(r: float) -> int:
    """Number of atoms per cluster for the clustered prior; 1 for r >= 0.5."""
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    if r >= 0.5:
        return 1
    ratio = math.log1p(1.0 / r) / (2.0 * math.log1p(4.0 * r))
    return 1 + math.ceil(ratio)


def _mass_rule_clusters(eta: float) -> int:
    """Smallest cluster count whose dropped geometric tail has log mass < -60."""
    log_eta = math.log(eta)
    j = 1
    while (j + 1) * log_eta >= _TAIL_LOG_MASS:
        j += 1
    return j


def default_max_cluster(eta: float, coverage_span: float | None = None) -> int:
    """Default cluster count: the tail-mass rule joined with window coverage.

    coverage_span is the spatial period of one cluster in lambda_e units
    (1 for lambda_e-spaced clusters); enough clusters are kept to reach
    atoms out to 7 lambda_e, since the tail-mass rule alone under-covers the
    default search window once eta is very small.
    """
    j = _mass_rule_clusters(eta)
    if coverage_span is not None and coverage_span > 0.0:
        j = max(j, math.ceil(_COVERAGE_LAMBDA_E / coverage_span))
    return j


def _collapse_duplicates(
    locations: list[float], tol: float
) -> list[tuple[float, int, int]]:
    """Merge coincident locations; returns (location, first_index, multiplicity)."""
    merged: list[tuple[float, int, int]] = []
    for j, loc in enumerate(locations):
        if merged and abs(loc - merged[-1][0]) <= tol:
            prev = merged[-1]
            merged[-1] = (prev[0], prev[1], prev[2] + 1)
        else:
            merged.append((loc, j, 1))
    if len(merged) < len(locations):
        warnings.warn(
            "clipping produced coincident within-cluster atoms; merged duplicates",
            DegenerateSpacingWarning,
            stacklevel=3,
        )
    return merged


def build_cluster_prior(
    params: ModelParams,
    gamma: float,
    kappa: int,
    max_cluster: int | None = None,
) -> DiscretePrior:
    """Clustered prior: spike 1-eta, cluster i carries mass (1-eta)/2 * eta^|i|
    split equally across kappa atoms at geometric within-cluster spacing gamma,
    clipped at lambda_e; clusters repeat with period equal to the last atom.
    """
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")

    le, lf = params.lambda_e, params.lambda_f
    log_eta = params.log_eta
    base = [min(gamma**j * lf, le) for j in range(kappa)]
    merged = _collapse_duplicates(base, tol=1e-12 * le)
    span = base[-1]  # cluster period mu_{1,kappa}

    if max_cluster is None:
        max_cluster = default_max_cluster(params.eta, coverage_span=span / le)
    if max_cluster < 1:
        raise ValueError(f"max_cluster must be >= 1, got {max_cluster}")

    log_half_slab = math.log1p(-params.eta) - math.log(2.0)
    atoms: list[Atom] = []
    for i in range(1, max_cluster + 1):
        cluster_log_mass = log_half_slab + i * log_eta
        for loc, j0, mult in merged:
            lw = cluster_log_mass - math.log(kappa) + math.log(mult)
            pos = (i - 1) * span + loc
            atoms.append(Atom(pos, lw, i, j0 + 1))
            atoms.append(Atom(-pos, lw, -i, j0 + 1))
    atoms.sort(key=lambda a: a.location)

    trunc = Truncation(max_cluster, (max_cluster + 1) * log_eta)
    return DiscretePrior(math.log1p(-params.eta), tuple(atoms), FAMILY_CLUSTER, trunc)


def build_clustered_prior(
    params: ModelParams, max_cluster: int | None = None
) -> DiscretePrior:
    """The calibrated clustered prior: gamma = 1 + 4r, kappa = cluster_size(r)."""
    prior = build_cluster_prior(
        params, gamma=1.0 + 4.0 * params.r, kappa=cluster_size(params.r),
        max_cluster=max_cluster,
    )
    return replace(prior, family=FAMILY_CLUSTERED)


def build_estimative_grid_prior(
    params: ModelParams, max_cluster: int | None = None
) -> DiscretePrior:
    """Grid prior with atoms at +-i*lambda_e and weight (1-eta)/2 * eta^i."""
    if max_cluster is None:
        max_cluster = default_max_cluster(params.eta, coverage_span=1.0)
    log_half_slab = math.log1p(-params.eta) - math.log(2.0)
    atoms: list[Atom] = []
    for i in range(1, max_cluster + 1):
        lw = log_half_slab + i * params.log_eta
        atoms.append(Atom(i * params.lambda_e, lw, i, 1))
        atoms.append(Atom(-i * params.lambda_e, lw, -i, 1))
    atoms.sort(key=lambda a: a.location)
    trunc = Truncation(max_cluster, (max_cluster + 1) * params.log_eta)
    return DiscretePrior(
        math.log1p(-params.eta), tuple(atoms), FAMILY_ESTIMATIVE_GRID, trunc
    )


def default_max_atoms_predictive(params: ModelParams) -> int:
    """Tail rule (1 + m*v) log eta < -60 joined with window coverage."""
    v, log_eta = params.v, params.log_eta
    m = 1
    while (1.0 + m * v) * log_eta >= _TAIL_LOG_MASS:
        m += 1
    coverage = math.ceil(_COVERAGE_LAMBDA_E * params.lambda_e / params.lambda_f)
    return max(m, coverage)


def build_predictive_grid_prior(
    params: ModelParams, max_atoms: int | None = None
) -> DiscretePrior:
    """Grid prior with spacing lambda_f and per-atom decay eta^v.

    Slab mass sums to eta exactly in the untruncated limit.
    """
    if max_atoms is None:
        max_atoms = default_max_atoms_predictive(params)
    v, log_eta = params.v, params.log_eta
    # log( eta (1 - eta^v) / 2 )
    log_head = log_eta + math.log1p(-math.exp(v * log_eta)) - math.log(2.0)
    atoms: list[Atom] = []
    for i in range(1, max_atoms + 1):
        lw = log_head + (i - 1) * v * log_eta
        atoms.append(Atom(i * params.lambda_f, lw, i, 1))
        atoms.append(Atom(-i * params.lambda_f, lw, -i, 1))
    atoms.sort(key=lambda a: a.location)
    trunc = Truncation(max_atoms, (1.0 + max_atoms * v) * log_eta)
    return DiscretePrior(
        math.log1p(-params.eta), tuple(atoms), FAMILY_PREDICTIVE_GRID, trunc
    )


def bigrid_inner_spacing(r: float) -> float:
    """Inner-section spacing factor b(r) = min(4r(1+r)/(1+2r), 1)."""
    return min(4.0 * r * (1.0 + r) / (1.0 + 2.0 * r), 1.0)


def bigrid_inner_count(r: float) -> int:
    """Number of inner-section atoms J = 1 + ceil(2 b^{-3/2})."""
    b = bigrid_inner_spacing(r)
    return 1 + math.ceil(2.0 * b**-1.5)


def build_bigrid_prior(
    params: ModelParams, max_outer: int | None = None
) -> DiscretePrior:
    """Bi-grid prior: dense inner section of J atoms spaced b*lambda_f, then an
    outer geometric tail with the predictive-grid spacing and decay.

    The overall slab constant is fixed numerically so the untruncated slab
    mass equals eta; with b = 1 this reduces exactly to the predictive grid.
    """
    r, v, log_eta, lf = params.r, params.v, params.log_eta, params.lambda_f
    b = bigrid_inner_spacing(r)
    J = bigrid_inner_count(r)

    inner_locs = [lf * (1.0 + b * (j - 1)) for j in range(1, J + 1)]
    inner_rel = [(j - 1) * b * b * v * log_eta for j in range(1, J + 1)]
    log_geom = math.log1p(-math.exp(v * log_eta))  # log(1 - eta^v)
    # log of the untruncated relative slab sum (one sign):
    #   sum_j eta^{(j-1) b^2 v} + eta^{(J-1) b^2 v} * eta^v / (1 - eta^v)
    tail_rel = inner_rel[-1] + v * log_eta - log_geom
    log_norm = float(logsumexp(np.array(inner_rel + [tail_rel])))

    if max_outer is None:
        coverage = math.ceil((_COVERAGE_LAMBDA_E * params.lambda_e - inner_locs[-1]) / lf)
        max_outer = max(coverage, 1)
        while (
            math.log(params.eta)
            - log_norm
            + inner_rel[-1]
            + (max_outer + 1) * v * log_eta
            - log_geom
        ) >= _TAIL_LOG_MASS:
            max_outer += 1
    if max_outer < 1:
        raise ValueError(f"max_outer must be >= 1, got {max_outer}")

    log_half_slab = math.log(params.eta) - math.log(2.0) - log_norm
    atoms: list[Atom] = []
    for j in range(1, J + 1):
        lw = log_half_slab + inner_rel[j - 1]
        atoms.append(Atom(inner_locs[j - 1], lw, j, 1))
        atoms.append(Atom(-inner_locs[j - 1], lw, -j, 1))
    for l in range(1, max_outer + 1):
        lw = log_half_slab + inner_rel[-1] + l * v * log_eta
        loc = inner_locs[-1] + l * lf
        atoms.append(Atom(loc, lw, J + l, 1))
        atoms.append(Atom(-loc, lw, -(J + l), 1))
    atoms.sort(key=lambda a: a.location)

    dropped = (
        math.log(params.eta)
        - log_norm
        + inner_rel[-1]
        + (max_outer + 1) * v * log_eta
        - log_geom
    )
    trunc = Truncation(J + max_outer, dropped)
    return DiscretePrior(math.log1p(-params.eta), tuple(atoms), FAMILY_BIGRID, trunc)


def truncated_cluster_size(r: float) -> int:
    """Cluster size of the two-cluster prior: the eq-K count at ratio 1+2r,
    reduced by one and floored at 1."""
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    if r >= 0.5:
        return 1
    ratio = math.log1p(1.0 / r) / (2.0 * math.log1p(2.0 * r))
    return max(math.ceil(ratio), 1)


def build_truncated_cluster_prior(params: ModelParams) -> DiscretePrior:
    """Two-cluster prior: spike 1-eta plus clusters of mass eta/2 at +-C_1,
    geometric within-cluster ratio 1+2r, atoms clipped at lambda_e."""
    kt = truncated_cluster_size(params.r)
    gt = 1.0 + 2.0 * params.r
    le, lf = params.lambda_e, params.lambda_f
    base = [min(gt**j * lf, le) for j in range(kt)]
    merged = _collapse_duplicates(base, tol=1e-12 * le)

    log_cluster = math.log(params.eta) - math.log(2.0)
    atoms: list[Atom] = []
    for loc, j0, mult in merged:
        lw = log_cluster - math.log(kt) + math.log(mult)
        atoms.append(Atom(loc, lw, 1, j0 + 1))
        atoms.append(Atom(-loc, lw, -1, j0 + 1))
    atoms.sort(key=lambda a: a.location)
    trunc = Truncation(1, -math.inf)
    return DiscretePrior(
        math.log1p(-params.eta), tuple(atoms), FAMILY_TRUNCATED_CLUSTER, trunc
    )


def pure_spike_prior() -> DiscretePrior:
    """Degenerate prior with all mass at the origin (testing aid)."""
    return DiscretePrior(0.0, (), FAMILY_CLUSTER, Truncation(0, -math.inf))
