"""verify: property checks per module, printed as a PASS/FAIL table."""

from tabulate import tabulate

from services import verify as checks


def add_parser(subparsers, common):
    p = subparsers.add_parser("verify", parents=[common], help="run the property checks")
    p.add_argument("--module", default=None, choices=sorted(checks.SUITES),
                   help="only this module's checks")
    p.set_defaults(handler=handle)
    return p


def handle(args) -> int:
    results = checks.run_suite(args.module)
    rows = [[r["module"], r["name"], f"{r['value']:.3e}", f"{r['limit']:.1e}",
             "PASS" if r["passed"] else "FAIL"] for r in results]
    print(tabulate(rows, headers=["module", "check", "value", "limit", ""]))
    failed = [r for r in results if not r["passed"]]
    if failed:
        print(f"❌ {len(failed)} of {len(results)} checks failed")
        return 1
    print(f"✅ {len(results)} checks passed")
    return 0
