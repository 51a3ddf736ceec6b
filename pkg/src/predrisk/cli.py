"""Command-line surface: worst-case risk tables, risk profiles, Bayes-risk
ratios, and design diagnostics, emitted as deterministic CSV/JSON files.

Exit codes: 0 success, 1 computation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    DiscretePrior,
    ModelParams,
    build_bigrid_prior,
    build_clustered_prior,
    build_cluster_prior,
    build_estimative_grid_prior,
    build_predictive_grid_prior,
    build_truncated_cluster_prior,
    cluster_size,
    dumps_17g,
    make_params,
)
from .risk import (
    QuadratureSpec,
    SearchSpec,
    bayes_risk,
    benchmark_risk,
    sup_risk,
)
from .rules import (
    BayesRule,
    PluginRule,
    PredictiveRule,
    SpikeUniformSlabRule,
    ThresholdedClusterRule,
    posterior_predictive,
)
from .theory import (
    bayes_minimax_ratio_limit,
    cluster_coverage_check,
    minimax_asymptote,
    unit_cluster_gap_analysis,
)

RULE_NAMES = ("plugin", "thresh", "eg", "pg", "bg", "sus", "clustered")
# Column order of the worst-case risk table.
TABLE_COLUMNS = ("plugin", "thresh", "eg", "pg", "bg", "sus", "clustered")
COLUMN_TITLES = {
    "plugin": "Plugin",
    "thresh": "Thresh",
    "eg": "E-Grid",
    "pg": "P-Grid",
    "bg": "Bi-Grid",
    "sus": "SUS",
    "clustered": "Clustered",
}

DEFAULT_ETAS = (0.01, 1e-5, 1e-10)
DEFAULT_RS = (1.0, 0.5, 0.25, 0.1)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    eta_list: list[float] = field(default_factory=lambda: list(DEFAULT_ETAS))
    r_list: list[float] = field(default_factory=lambda: list(DEFAULT_RS))
    rule_list: list[str] = field(default_factory=lambda: list(TABLE_COLUMNS))
    nodes: int = 201
    theta_max: float | None = None
    coarse_step: float | None = None
    max_cluster: int | None = None
    out: str | None = None
    fmt: str = "csv"
    strict: bool = False
    figure: bool = True
    dump_predictive: float | None = None
    prop1: bool = False

    def validate(self) -> None:
        if not self.eta_list or not self.r_list:
            raise UsageError("eta and r lists must be non-empty")
        if self.command in ("table", "profile") and not self.rule_list:
            raise UsageError("rule list must be non-empty")
        for eta in self.eta_list:
            if not (0.0 < eta < 1.0):
                raise UsageError(f"eta must lie in (0, 1), got {eta}")
        for r in self.r_list:
            if r <= 0.0:
                raise UsageError(f"r must be positive, got {r}")
        for rule in self.rule_list:
            if rule not in RULE_NAMES:
                raise UsageError(f"unknown rule {rule!r}; choose from {RULE_NAMES}")
        if self.fmt not in ("csv", "json"):
            raise UsageError(f"unknown format {self.fmt!r}")
        if self.nodes < 21:
            raise UsageError("--nodes must be at least 21")

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(node_count=self.nodes)

    def search(self) -> SearchSpec:
        return SearchSpec(
            theta_max=self.theta_max, coarse_step=self.coarse_step, strict=self.strict
        )


def make_rule(name: str, params: ModelParams, max_cluster: int | None = None) -> PredictiveRule:
    """Instantiate a named predictive rule for one (eta, r) configuration."""
    if name == "clustered":
        return BayesRule(build_clustered_prior(params, max_cluster))
    if name == "eg":
        return BayesRule(build_estimative_grid_prior(params, max_cluster))
    if name == "pg":
        return BayesRule(build_predictive_grid_prior(params, max_cluster))
    if name == "bg":
        return BayesRule(build_bigrid_prior(params, max_cluster))
    if name == "thresh":
        return ThresholdedClusterRule(
            build_truncated_cluster_prior(params), params.lambda_e
        )
    if name == "plugin":
        return PluginRule(params.lambda_e)
    if name == "sus":
        # 2*lambda_e tracks the reference worst-case quotients much closer
        # than wider slabs; the half-width stays an explicit rule parameter.
        return SpikeUniformSlabRule(2.0 * params.lambda_e)
    raise UsageError(f"unknown rule {name!r}")


def rule_prior(rule: PredictiveRule) -> DiscretePrior | None:
    if isinstance(rule, BayesRule):
        return rule.prior
    if isinstance(rule, ThresholdedClusterRule):
        return rule.inner
    return None


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write output file {path!r}: {exc}") from exc


def _default_out(stem: str, fmt: str) -> str:
    return f"{stem}.{fmt}"


def cmd_table(config: RunConfig) -> int:
    """Worst-case risk of every requested rule as a quotient of the asymptote."""
    quad = config.quadrature()
    search = config.search()
    rows: list[dict] = []
    failed = False
    for eta in config.eta_list:
        for r in config.r_list:
            params = make_params(eta, r)
            row: dict = {
                "eta": eta,
                "r": r,
                "a_theory": minimax_asymptote(eta, r).per_signal,
            }
            for name in config.rule_list:
                try:
                    rule = make_rule(name, params, config.max_cluster)
                    profile = sup_risk(rule, params, search, quad)
                    row[name] = profile.sup_risk / row["a_theory"]
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    print(f"cell (eta={eta}, r={r}, {name}) failed: {exc}", file=sys.stderr)
                    row[name] = None
                    failed = True
            rows.append(row)

    headers = ["eta", "r", "A-Theory"] + [
        COLUMN_TITLES[c] for c in TABLE_COLUMNS if c in config.rule_list
    ]
    print("  ".join(f"{h:>10}" for h in headers))
    for row in rows:
        cells = [f"{row['eta']:>10.2e}", f"{row['r']:>10.4g}", f"{row['a_theory']:>10.4f}"]
        for name in TABLE_COLUMNS:
            if name not in config.rule_list:
                continue
            q = row[name]
            cells.append(f"{'ERR':>10}" if q is None else f"{q:>10.4f}")
        print("  ".join(cells))

    out = config.out or _default_out("risk_table", config.fmt)
    if config.fmt == "csv":
        lines = [",".join(["eta", "r", "a_theory"] + [c for c in TABLE_COLUMNS if c in config.rule_list])]
        for row in rows:
            cells = [format(row["eta"], ".17g"), format(row["r"], ".17g"), format(row["a_theory"], ".17g")]
            for name in TABLE_COLUMNS:
                if name in config.rule_list:
                    q = row[name]
                    cells.append("ERR" if q is None else format(q, ".17g"))
            lines.append(",".join(cells))
        _write_text(out, "\n".join(lines) + "\n")
    else:
        _write_text(out, dumps_17g({"rows": rows}) + "\n")
    return 1 if failed else 0


def cmd_profile(config: RunConfig) -> int:
    """Full risk profile of a single (eta, r, rule) cell: CSV of the curve, a
    sidecar JSON with atom locations and the benchmark, and a rendered figure."""
    if len(config.eta_list) != 1 or len(config.r_list) != 1 or len(config.rule_list) != 1:
        raise UsageError("profile needs exactly one eta, one r, and one rule")
    eta, r, name = config.eta_list[0], config.r_list[0], config.rule_list[0]
    params = make_params(eta, r)
    rule = make_rule(name, params, config.max_cluster)

    if config.dump_predictive is not None:
        prior = rule_prior(rule)
        if prior is None:
            raise UsageError(f"rule {name!r} has no mixture predictive to dump")
        mix = posterior_predictive(prior, config.dump_predictive, params)
        print(mix.to_json())
        return 0

    profile = sup_risk(rule, params, config.search(), config.quadrature())
    out = config.out or _default_out(f"profile_{name}", "csv")
    _write_text(out, profile.to_csv())

    prior = rule_prior(rule)
    sidecar = {
        "eta": eta,
        "r": r,
        "rule": name,
        "benchmark": profile.benchmark,
        "sup_theta": profile.sup_theta,
        "sup_risk": profile.sup_risk,
        "atoms": []
        if prior is None
        else [a.location for a in prior.positive_atoms()],
    }
    _write_text(str(Path(out).with_suffix(".atoms.json")), dumps_17g(sidecar) + "\n")
    if config.figure:
        from .figures import render_profile

        render_profile(
            profile,
            params,
            str(Path(out).with_suffix(".png")),
            prior,
            title=f"{COLUMN_TITLES[name]}  eta={eta:g}  r={r:g}",
        )
    print(
        f"sup risk {profile.sup_risk:.4f} at theta={profile.sup_theta:.4f} "
        f"(benchmark {profile.benchmark:.4f}) -> {out}"
    )
    return 0


def cmd_bayes_risk(config: RunConfig) -> int:
    """Average-risk-to-asymptote quotients beside the closed-form limit."""
    quad = config.quadrature()
    rows = []
    for eta in config.eta_list:
        for r in config.r_list:
            params = make_params(eta, r)
            prior = build_clustered_prior(params, config.max_cluster)
            result = bayes_risk(prior, params, quad)
            ratio = result.value / (eta * minimax_asymptote(eta, r).per_signal)
            rows.append(
                {
                    "eta": eta,
                    "r": r,
                    "bayes_risk": result.value,
                    "tail_bound": result.tail_bound,
                    "ratio": ratio,
                    "limit_ratio": bayes_minimax_ratio_limit(r),
                }
            )
    print(f"{'eta':>10}  {'r':>8}  {'ratio':>8}  {'limit':>8}")
    for row in rows:
        print(
            f"{row['eta']:>10.2e}  {row['r']:>8.4g}  {row['ratio']:>8.4f}  "
            f"{row['limit_ratio']:>8.4f}"
        )
    out = config.out or _default_out("bayes_risk", config.fmt)
    if config.fmt == "csv":
        lines = ["eta,r,bayes_risk,tail_bound,ratio,limit_ratio"]
        for row in rows:
            lines.append(
                ",".join(
                    format(row[k], ".17g")
                    for k in ("eta", "r", "bayes_risk", "tail_bound", "ratio", "limit_ratio")
                )
            )
        _write_text(out, "\n".join(lines) + "\n")
    else:
        _write_text(out, dumps_17g({"rows": rows}) + "\n")
    return 0


def cmd_diagnostics(config: RunConfig) -> int:
    """Cluster-size table, coverage certificates, unit-cluster gap analysis,
    and the closed-form Bayes-to-minimax ratio curve."""
    eta = config.eta_list[0]
    report: dict = {
        "eta": eta,
        "cluster_sizes": [{"r": r, "K": cluster_size(r)} for r in config.r_list],
        "ratio_curve": [
            {"r": r, "ratio": bayes_minimax_ratio_limit(r)} for r in config.r_list
        ],
        "coverage": [],
        "gap_analysis": [],
    }
    for r in config.r_list:
        if 0.0 < r < 0.5:
            intervals = cluster_coverage_check(r, eta)
            report["coverage"].append(
                {
                    "r": r,
                    "all_covered": all(iv.covered for iv in intervals),
                    "intervals": [
                        {
                            "index": iv.index,
                            "alpha": iv.alpha,
                            "beta": iv.beta,
                            "target_lo": iv.target_lo,
                            "target_hi": iv.target_hi,
                            "covered": iv.covered,
                        }
                        for iv in intervals
                    ],
                }
            )
        gap = unit_cluster_gap_analysis(r, eta)
        report["gap_analysis"].append(
            {
                "r": r,
                "dominance_switch": gap.dominance_switch,
                "gap_exists": gap.gap_exists,
            }
        )

    if config.prop1:
        quad = config.quadrature()
        search = config.search()
        demos = []
        for r in config.r_list:
            if r >= 0.5:
                continue
            params = make_params(eta, r)
            bench = benchmark_risk(params)
            clustered = sup_risk(
                BayesRule(build_clustered_prior(params, config.max_cluster)),
                params, search, quad,
            )
            forced = sup_risk(
                BayesRule(
                    build_cluster_prior(params, 1.0 + 4.0 * r, 1, config.max_cluster)
                ),
                params, search, quad,
            )
            demos.append(
                {
                    "r": r,
                    "clustered_quotient": clustered.sup_risk / bench,
                    "forced_k1_quotient": forced.sup_risk / bench,
                }
            )
        report["forced_k1_demo"] = demos

    text = dumps_17g(report) + "\n"
    out = config.out or _default_out("diagnostics", "json")
    _write_text(out, text)
    covered = all(c["all_covered"] for c in report["coverage"]) if report["coverage"] else True
    print(f"K over {len(config.r_list)} r values; coverage all_covered={covered} -> {out}")
    return 0


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad numeric list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predrisk",
        description="Worst-case KL predictive risk of sparse discrete priors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("table", "worst-case risk quotients over an (eta, r, rule) grid"),
        ("profile", "risk profile of one (eta, r, rule) cell"),
        ("bayes-risk", "average risk of the clustered prior vs its limit"),
        ("diagnostics", "cluster sizes, coverage certificates, gap analysis"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--eta", default=None, help="comma-separated sparsity levels")
        p.add_argument("--r", default=None, help="comma-separated variance ratios")
        p.add_argument("--rule", default=None, help=f"comma-separated rules from {RULE_NAMES}")
        p.add_argument("--nodes", type=int, default=None, help="quadrature node count")
        p.add_argument("--theta-max", type=float, default=None, help="search window end")
        p.add_argument("--coarse-step", type=float, default=None, help="coarse grid step")
        p.add_argument("--max-cluster", type=int, default=None, help="prior truncation")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None)
        p.add_argument("--strict", action="store_true", help="boundary warning becomes an error")
        p.add_argument("--config", default=None, help="JSON config file (flags override)")
        if name == "profile":
            p.add_argument("--no-figure", action="store_true", help="skip figure rendering")
            p.add_argument(
                "--dump-predictive", type=float, default=None, metavar="X",
                help="print the predictive mixture at observation X and exit",
            )
        if name == "diagnostics":
            p.add_argument(
                "--prop1", action="store_true",
                help="also run forced single-atom vs clustered sup comparisons",
            )
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values: dict = {}
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config!r}: {exc}") from exc

    def pick(flag_value, key: str, fallback):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return file_values[key]
        return fallback

    config = RunConfig(command=args.command)
    eta = pick(args.eta, "eta", None)
    if eta is not None:
        config.eta_list = _parse_floats(eta) if isinstance(eta, str) else [float(x) for x in eta]
    r = pick(args.r, "r", None)
    if r is not None:
        config.r_list = _parse_floats(r) if isinstance(r, str) else [float(x) for x in r]
    rule = pick(args.rule, "rule", None)
    if rule is not None:
        names = rule.split(",") if isinstance(rule, str) else list(rule)
        config.rule_list = [n.strip() for n in names if n.strip()]
    config.nodes = int(pick(args.nodes, "nodes", config.nodes))
    config.theta_max = pick(args.theta_max, "theta_max", None)
    config.coarse_step = pick(args.coarse_step, "coarse_step", None)
    config.max_cluster = pick(args.max_cluster, "max_cluster", None)
    config.out = pick(args.out, "out", None)
    config.fmt = pick(args.fmt, "format", config.fmt)
    config.strict = bool(args.strict or file_values.get("strict", False))
    if args.command == "profile":
        config.figure = not args.no_figure
        config.dump_predictive = args.dump_predictive
    if args.command == "diagnostics":
        config.prop1 = bool(args.prop1 or file_values.get("prop1", False))
    config.validate()
    return config


COMMANDS = {
    "table": cmd_table,
    "profile": cmd_profile,
    "bayes-risk": cmd_bayes_risk,
    "diagnostics": cmd_diagnostics,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _config_from_args(args)
        return COMMANDS[args.command](config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
