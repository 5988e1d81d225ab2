"""dtn-table: measured Dirichlet-to-Neumann symbol of the first n modes."""

import csv
from pathlib import Path

from tabulate import tabulate

from config import DEFAULT_M
from services.extension import ZGrid, build_extension_basis, fit_symbol_slope, nu_exponent
from services.profile_ode import get_profile
from services.spectral_basis import DomainSpec, build_basis

PREVIEW_ROWS = 12


def add_parser(subparsers, common):
    p = subparsers.add_parser("dtn-table", parents=[common], help="tabulate the measured DtN symbol")
    p.add_argument("--a", type=float, required=True, help="weight exponent, a < 1")
    p.add_argument("--n", type=int, required=True, help="number of modes")
    p.add_argument("--kind", default="torus", choices=["torus", "rectangle"])
    p.add_argument("--M", type=int, default=DEFAULT_M, help="vertical cells")
    p.add_argument("--out", default=None, help="write the full table as CSV")
    p.set_defaults(handler=handle)
    return p


def handle(args) -> int:
    basis = build_basis(DomainSpec(kind=args.kind, n=args.n))
    prof = get_profile(args.a)
    zgrid = ZGrid.for_basis(args.a, basis, prof, M=args.M)
    eb = build_extension_basis(zgrid, basis, prof)
    measured = eb.measured_symbol()
    rows = [[i + 1, basis.k[i], measured[i], eb.symbol[i], measured[i] / eb.symbol[i] - 1]
            for i in range(basis.n)]
    headers = ["mode", "k", "measured", "kappa_ext k^nu", "rel. error"]
    print(tabulate(rows[:PREVIEW_ROWS], headers=headers, floatfmt=".6g"))
    if basis.n > PREVIEW_ROWS:
        print(f"... {basis.n - PREVIEW_ROWS} more rows")
    if basis.k.max() > basis.k.min():
        print(f"🔍 fitted slope {fit_symbol_slope(basis.k, measured):.6f} "
              f"(nu = {nu_exponent(args.a):.6f})")

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["mode", "k", "measured", "predicted", "rel_error"])
            writer.writerows(rows)
        print(f"📁 {out}")
    return 0
