"""
Simulator and property checks for the 3D quasi-geostrophic system with
Ekman pumping: interior potential vorticity transport coupled to a
generalized SQG equation on z = 0.

# Coupled run
python main.py simulate --config configs/torus_coupled.json

# Refinement study over the cutoff n
python main.py simulate --config configs/boundary_only.json --refine 8,16,32

# Property checks, all modules or one
python main.py verify
python main.py verify --module transport

# Profile constants for one exponent, with the table as CSV
python main.py profile --a 0.5 --out runs/profile_a0.5.csv

# Measured Dirichlet-to-Neumann symbol
python main.py dtn-table --a 0.5 --n 32 --debug
"""

#!/usr/bin/env python3
import argparse
import sys

from commands import dtn_table, profile, simulate, verify
from services.errors import QGSimError


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--debug", action="store_true", default=False,
                        help="print setup details and per-step norms")
    parser = argparse.ArgumentParser(prog="qgsim")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (simulate, verify, profile, dtn_table):
        command.add_parser(subparsers, common)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except QGSimError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
