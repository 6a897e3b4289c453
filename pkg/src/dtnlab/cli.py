"""Command-line runner: one subcommand per experiment, JSON config in,
results.csv and summary.json out."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import dtn, fem
from . import geometry as geo
from .config import load_scenario, scenario_from_dict
from .errors import ConfigError, DtnLabError
from .experiments import (
    DEFAULT_SCENARIOS,
    EXPERIMENTS,
    coefficient_from_spec,
    domain_from_spec,
    multiplier_from_spec,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dtn-lab",
        description=(
            "Numerical experiments for boundary flux operators, their "
            "multiplication commutators, and Carleson-measure functionals "
            "on polygonal domains."
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None, help="JSON scenario file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument(
            "--dump-matrices",
            action="store_true",
            help="dump the boundary operator and commutator matrices as text",
        )
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    return parser


def write_results_csv(path, rows):
    rows = sorted(rows, key=lambda r: (r["scenario"], r["level"], r["quantity"]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "level", "h", "quantity", "value"])
        for r in rows:
            writer.writerow(
                [r["scenario"], r["level"], f"{r['h']:.12g}", r["quantity"], f"{r['value']:.12g}"]
            )


def write_summary_json(path, subcommand, scenario, result):
    summary = {
        "subcommand": subcommand,
        "scenario": result.tag,
        "seed": scenario.seed,
        "alpha0": result.info.get("alpha0"),
        "passed": result.passed,
        "checks": result.checks,
        "info": {k: v for k, v in result.info.items() if k != "alpha0"},
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def dump_matrices(out_dir, scenario):
    domain = domain_from_spec(scenario.domain)
    mesh = geo.triangulate(domain, scenario.levels[-1])
    sys_ = fem.assemble(mesh, coefficient_from_spec(scenario.coefficients))
    op = dtn.steklov_poincare(sys_)
    fem.write_matrix_coo(sys_.matrix, out_dir / "stiffness.txt")
    fem.write_matrix_coo(op.matrix, out_dir / "dtn_matrix.txt")
    cm = dtn.commutator_matrix(op, multiplier_from_spec(scenario.g))
    fem.write_matrix_coo(cm, out_dir / "commutator_matrix.txt")
    geo.write_mesh_txt(mesh, out_dir / "mesh.txt")


def run(subcommand, config_path=None, out_dir=Path("."), dump=False, threads=1, seed=None):
    defaults = DEFAULT_SCENARIOS[subcommand]
    if config_path is not None:
        scenario = load_scenario(config_path, defaults)
    else:
        scenario = scenario_from_dict({}, defaults)
    if seed is not None:
        scenario.seed = int(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = EXPERIMENTS[subcommand](scenario, threads=max(1, int(threads)))
    write_results_csv(out_dir / "results.csv", result.rows)
    write_summary_json(out_dir / "summary.json", subcommand, scenario, result)
    if dump:
        dump_matrices(out_dir, scenario)
    for check in result.checks:
        status = "pass" if check["passed"] else "FAIL"
        print(
            f"[{status}] {result.tag}: {check['name']} = {check['value']:.6g} "
            f"(threshold {check['threshold']:.6g})"
        )
    return 0 if result.passed else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(
            args.subcommand,
            config_path=args.config,
            out_dir=args.out,
            dump=args.dump_matrices,
            threads=args.threads,
            seed=args.seed,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DtnLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
