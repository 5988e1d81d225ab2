"""profile: solve the profile ODE for one a and report its constants."""

import csv
from pathlib import Path

import numpy as np
from tabulate import tabulate

from config import PROFILE_TOL, PROFILE_W_MAX
from services.extension import alpha_exponent, extension_constant, nu_exponent
from services.profile_ode import kappa_identity_check, solve_profile


def add_parser(subparsers, common):
    p = subparsers.add_parser("profile", parents=[common], help="solve the profile ODE for one exponent a")
    p.add_argument("--a", type=float, required=True, help="weight exponent, a < 1")
    p.add_argument("--w-max", type=float, default=PROFILE_W_MAX)
    p.add_argument("--tol", type=float, default=PROFILE_TOL)
    p.add_argument("--out", default=None, help="write w, W, W' as CSV")
    p.set_defaults(handler=handle)
    return p


def handle(args) -> int:
    prof = solve_profile(args.a, args.w_max, args.tol, debug=args.debug)
    rows = [
        ["nu", nu_exponent(args.a)],
        ["alpha", alpha_exponent(args.a)],
        ["C_a = W'(0)", prof.C_a],
        ["kappa", prof.kappa],
        ["kappa_ext", extension_constant(args.a, prof.kappa)],
        ["|J(W) - kappa|", kappa_identity_check(prof)],
        ["ODE residual", prof.ode_residual()],
        ["w range", prof.nodes[-1]],
    ]
    print(tabulate(rows, headers=["quantity", "value"], floatfmt=".10g"))

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        w = np.linspace(0.0, float(prof.nodes[-1]), 1001)
        with open(out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["w", "W", "dW"])
            writer.writerows(zip(w, prof(w), prof.derivative(w)))
        print(f"📁 {out}")
    return 0
