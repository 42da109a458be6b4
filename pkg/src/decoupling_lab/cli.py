"""Command-line front end: identity suite, probe runner, report aggregation.

Exit codes: 0 success, 1 identity/probe failure, 2 configuration error,
3 enumeration guard exceeded.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .multiindex import GuardExceeded
from .verify.engine import report_from_obj, reports_to_csv
from .verify.identities import run_identity_suite
from .verify.registry import ConfigError, run_probe_config

DEFAULT_SEED = 20_260_810
SEED_ENV = "DECOUPLING_LAB_SEED"


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}")


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    groups = run_identity_suite(seed=seed, gamma=args.bridge_gamma)
    all_passed = all(g.passed for g in groups)
    summary = {
        "seed": seed,
        "groups": [
            {
                "name": g.name,
                "passed": g.passed,
                "deviation": g.deviation,
                "tolerance": g.tolerance,
                "detail": g.detail,
            }
            for g in groups
        ],
        "passed": all_passed,
    }
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        for g in groups:
            print(g.line())
        print(
            f"{len(groups)} identity groups, "
            f"{sum(g.passed for g in groups)} passed, seed {seed}"
        )
        bridge = next(g for g in groups if g.name == "second-moment-bridge")
        print(
            "decoupling exponent gamma* = {:+.6f} "
            "(reciprocal-square-root convention mismatches by {:.3e})".format(
                bridge.detail["gamma_star"],
                bridge.detail["reciprocal_convention_mismatch"],
            )
        )
    return 0 if all_passed else 1


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")


def _write_reports(reports, out_base):
    os.makedirs(os.path.dirname(out_base) or ".", exist_ok=True)
    objs = [r.to_obj() for r in reports]
    payload = objs[0] if len(objs) == 1 else objs
    with open(out_base + ".json", "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, indent=2, allow_nan=True))
        fh.write("\n")
    with open(out_base + ".csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(reports_to_csv(reports))
    return out_base + ".json", out_base + ".csv"


def cmd_probe(args) -> int:
    options = _load_config(args.config)
    if args.seed is not None:
        options["seed"] = args.seed
    elif "seed" not in options:
        options["seed"] = _env_seed()
    if args.replicates is not None:
        options["replicates"] = args.replicates
    if args.out is not None:
        options["out"] = args.out
    reports = run_probe_config(options)
    out = options.get("out")
    if out:
        base = out[:-5] if out.endswith(".json") else out
        jpath, cpath = _write_reports(reports, base)
        print(f"wrote {jpath} and {cpath}")
    for r in reports:
        print(
            f"{r.probe} [{r.tag}] lhs={r.lhs.mean:.6g} rhs={r.rhs.mean:.6g} "
            f"ratio={r.ratio:.4g} -> {r.outcome()}"
        )
    return 0 if all(r.as_expected for r in reports) else 1


def _load_reports(paths):
    reports = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        objs = payload if isinstance(payload, list) else [payload]
        reports.extend(report_from_obj(o) for o in objs)
    return reports


def cmd_report(args) -> int:
    paths = sorted({p for pattern in args.globs for p in globmod.glob(pattern)})
    if not paths:
        print("no report files matched", file=sys.stderr)
        return 2
    try:
        reports = _load_reports(paths)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"unreadable report input: {exc}", file=sys.stderr)
        return 2
    by_probe = {}
    for r in reports:
        by_probe.setdefault((r.probe, r.tag), []).append(r)
    lines = ["# Probe summary", ""]
    for (probe, tag), rs in sorted(by_probe.items()):
        lines.append(f"## {probe} [{tag}]")
        lines.append("")
        lines.append("| lhs | rhs | ratio | verdict | outcome | seed | M |")
        lines.append("|---|---|---|---|---|---|---|")
        for r in rs:
            lines.append(
                f"| {r.lhs.mean:.6g} | {r.rhs.mean:.6g} | {r.ratio:.4g} "
                f"| {r.verdict} | {r.outcome()} | {r.seed} | {r.replicates} |"
            )
        lines.append("")
    md = "\n".join(lines)
    csv_text = reports_to_csv(reports)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out + ".md", "w", encoding="utf-8") as fh:
            fh.write(md)
        with open(args.out + ".csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
        print(f"wrote {args.out}.md and {args.out}.csv")
    else:
        print(md)
        print("```csv")
        print(csv_text, end="")
        print("```")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="decoupling-lab",
        description="exact identities and Monte Carlo probes for random chaoses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the exact-identity suite")
    p_verify.add_argument("--json", action="store_true", help="machine-readable output")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument(
        "--bridge-gamma",
        type=float,
        default=None,
        help="override the pinned decoupling exponent (negative control)",
    )
    p_verify.set_defaults(fn=cmd_verify)

    p_probe = sub.add_parser("probe", help="run one inequality probe")
    p_probe.add_argument("--config", required=True, help="TOML experiment config")
    p_probe.add_argument("--seed", type=int, default=None)
    p_probe.add_argument("--replicates", type=int, default=None)
    p_probe.add_argument("--out", default=None, help="output base path")
    p_probe.set_defaults(fn=cmd_probe)

    p_report = sub.add_parser("report", help="aggregate probe report files")
    p_report.add_argument("globs", nargs="+", help="report JSON globs")
    p_report.add_argument("--out", default=None, help="output base path")
    p_report.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GuardExceeded as exc:
        print(f"guard exceeded: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
