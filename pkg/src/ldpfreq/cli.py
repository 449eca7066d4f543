"""Command-line entry point.

Subcommands::

    bench         run a benchmark grid from a JSON config
    params        print symmetric-configuration parameters as JSON
    bounds        print optimal-loss values and the communication bound
    construct-wss build a weighted subset scheme and save it to JSON
    verify        run a named brute-force verification suite
"""

from __future__ import annotations

import argparse
import json
import sys

from .model import EstimationMode, PrivacyBudget, save_scheme
from .theory import (
    comm_bound_bits,
    l1_from_l2,
    l2_of_k,
    l2_star,
    optimal_support_size,
    scheme_params,
)


def _add_de(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", type=int, required=True, help="dictionary size")
    parser.add_argument("--epsilon", type=float, required=True, help="privacy budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldpfreq",
        description="Optimal frequency estimation under local differential privacy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run a benchmark grid from a JSON config")
    bench.add_argument("--config", required=True, help="path to the config JSON")

    params = sub.add_parser("params", help="symmetric-configuration parameters")
    _add_de(params)
    params.add_argument("--k", type=int, default=None, help="support size (default: optimal)")

    bounds = sub.add_parser("bounds", help="optimal L1/L2 losses and communication bound")
    _add_de(bounds)
    bounds.add_argument("--n", type=int, required=True, help="number of clients")
    bounds.add_argument(
        "--mode",
        choices=["frequency", "distribution"],
        default="frequency",
        help="estimation target (default: frequency)",
    )

    wss = sub.add_parser("construct-wss", help="build and save a weighted subset scheme")
    _add_de(wss)
    wss.add_argument("--k", type=int, default=None, help="support size (default: optimal)")
    wss.add_argument("--seed", type=int, default=0, help="construction seed")
    wss.add_argument("--out", required=True, help="output scheme JSON path")

    verify = sub.add_parser("verify", help="run a brute-force verification suite")
    verify.add_argument(
        "--suite",
        default="all",
        help="suite name: symmetry, hash-census, fisher, urp, ocms-mixture, wss, all",
    )
    return parser


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _cmd_bench(args) -> int:
    from .harness import config_from_file, run_experiment

    report = run_experiment(config_from_file(args.config))
    ok = sum(1 for row in report.rows if row.status == "ok")
    print(f"wrote {report.csv_path} ({ok}/{len(report.rows)} cells ok)")
    print(f"wrote {report.json_path}")
    for path in report.figure_paths:
        print(f"wrote {path}")
    return 0 if ok == len(report.rows) else 1


def _cmd_params(args) -> int:
    budget = PrivacyBudget(args.epsilon)
    k = args.k if args.k is not None else optimal_support_size(args.d, budget)
    sp = scheme_params(args.d, budget, k)
    _emit(
        {
            "d": args.d,
            "epsilon": args.epsilon,
            "k": k,
            "optimal_k": optimal_support_size(args.d, budget),
            "real_k": args.d / (budget.e_eps + 1.0),
            "p_star": sp.p_star,
            "q_star": sp.q_star,
        }
    )
    return 0


def _cmd_bounds(args) -> int:
    budget = PrivacyBudget(args.epsilon)
    mode = EstimationMode[args.mode.upper()]
    k = optimal_support_size(args.d, budget)
    l2_int = l2_star(args.d, budget, args.n, mode, integer_k=True)
    l2_real = l2_star(args.d, budget, args.n, mode, integer_k=False)
    _emit(
        {
            "d": args.d,
            "epsilon": args.epsilon,
            "n": args.n,
            "mode": args.mode,
            "k_int": k,
            "k_real": args.d / (budget.e_eps + 1.0),
            "l1_int": l1_from_l2(l2_int, args.d),
            "l2_int": l2_int,
            "l1_real": l1_from_l2(l2_real, args.d),
            "l2_real": l2_real,
            "comm_bound_bits": comm_bound_bits(args.d),
        }
    )
    return 0


def _cmd_construct_wss(args) -> int:
    import numpy as np

    from .mechanisms import wss_construct

    budget = PrivacyBudget(args.epsilon)
    mech = wss_construct(
        args.d, budget, k=args.k, rng=np.random.default_rng(args.seed)
    )
    save_scheme(mech.scheme, mech.params.k, args.out)
    _emit(
        {
            "d": args.d,
            "epsilon": args.epsilon,
            "k": mech.params.k,
            "responses": mech.response_count,
            "response_bound": args.d * (args.d - 1) // 2 + 1,
            "attempts": mech.attempts,
            "residual": mech.residual,
            "theory_l2_at_n1": l2_of_k(args.d, budget, 1, mech.params.k),
            "out": args.out,
        }
    )
    return 0


def _cmd_verify(args) -> int:
    from .oracle import run_suite

    results = run_suite(args.suite)
    failed = 0
    for res in results:
        mark = "PASS" if res.ok else "FAIL"
        failed += 0 if res.ok else 1
        print(f"{mark} [{res.suite}] {res.name}: {res.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "bench": _cmd_bench,
        "params": _cmd_params,
        "bounds": _cmd_bounds,
        "construct-wss": _cmd_construct_wss,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
