"""simulate: run one config, or a refinement study over several n."""

from pathlib import Path

from tabulate import tabulate

from services.driver import refinement_study, run
from services.sim_config import load_config


def add_parser(subparsers, common):
    p = subparsers.add_parser("simulate", parents=[common], help="run the coupled system from a config file")
    p.add_argument("--config", required=True, help="path to a JSON run config")
    p.add_argument("--out", default=None, help="output directory (default: output.dir/<name>)")
    p.add_argument("--refine", default=None,
                   help="comma-separated cutoffs, e.g. 8,16,32, for a refinement study")
    p.add_argument("--no-progress", action="store_true", default=False,
                   help="hide the progress bar")
    p.set_defaults(handler=handle)
    return p


def handle(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else None

    if args.refine:
        ns = [int(s) for s in args.refine.split(",") if s.strip()]
        study = refinement_study(cfg, ns, out_dir=out, debug=args.debug)
        print(tabulate([[d["pair"], f"{d['max_diff']:.3e}"] for d in study["differences"]],
                       headers=["n pair", "max |Δ‖θ‖|"]))
        if study["decreasing"]:
            print("✅ differences decrease with n")
        else:
            print("⚠️  differences do not decrease with n")
        return 0

    result = run(cfg, out_dir=out, debug=args.debug, progress=not args.no_progress)
    checks = result.summary["checks"]
    print(tabulate([[c["name"], f"{c['value']:.3e}", f"{c['limit']:.1e}",
                     "PASS" if c["passed"] else "FAIL"] for c in checks],
                   headers=["check", "value", "limit", ""]))
    print(f"📁 {result.out_dir}")
    if not result.passed:
        print("❌ some run checks failed")
        return 1
    print("✅ all run checks passed")
    return 0
