#!/usr/bin/env python3
"""Run every probe config in scripts/configs and aggregate the reports.

Writes one JSON + CSV pair per config under reports/ (or --out-dir) and a
combined summary.  Exit code 0 means every probe matched its expectation.
"""

import argparse
import pathlib
import sys

from decoupling_lab.cli import main as cli_main

HERE = pathlib.Path(__file__).resolve().parent


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="reports")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--only", default=None, help="substring filter on config names")
    args = parser.parse_args(argv)

    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = sorted(HERE.joinpath("configs").glob("*.toml"))
    if args.only:
        configs = [c for c in configs if args.only in c.stem]
    if not configs:
        print("no configs matched", file=sys.stderr)
        return 2

    failures = 0
    for cfg in configs:
        print(f"== {cfg.stem}")
        cmd = ["probe", "--config", str(cfg), "--out", str(out_dir / cfg.stem)]
        if args.seed is not None:
            cmd += ["--seed", str(args.seed)]
        if args.replicates is not None:
            cmd += ["--replicates", str(args.replicates)]
        code = cli_main(cmd)
        if code != 0:
            failures += 1
            print(f"   exit {code}", file=sys.stderr)

    cli_main(["report", str(out_dir / "*.json"), "--out", str(out_dir / "summary")])
    print(f"\n{len(configs) - failures}/{len(configs)} probes as expected; "
          f"summary at {out_dir}/summary.md")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(run())
