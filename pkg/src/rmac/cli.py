"""Command line interface.

Subcommands: ``gen`` (dataset only), ``solve`` (full sweep), ``oracle``
(exhaustive bounds on tiny specs), ``verify`` (re-certify a stored result),
``summarize`` (recompute replicate statistics from a results CSV).

Exit codes: 0 success, 1 validation or verification error, 2 enumeration
budget / infeasibility refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .datagen import dataset_to_csv, equilibrium_strategy, generate_dataset
from .experiments import (
    SpecValidationError,
    parse_spec,
    read_results_csv,
    run,
    verify_result_file,
    write_summary,
)
from .mechanisms import ValuationSpec
from .oracle import BudgetExceededError, DEFAULT_BUDGET, enumerate_bounds
from .rng import derive_seed

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_REFUSED = 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmac",
                                description="Robust multi-agent counterfactual bounds")
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset from a scenario spec")
    gen.add_argument("--spec", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None, help="override the derived data seed")
    gen.add_argument("--replicate", type=int, default=0)

    solve = sub.add_parser("solve", help="run the full epsilon/mode/replicate sweep")
    solve.add_argument("--spec", required=True)
    solve.add_argument("--out", default=None, help="output directory (default: spec's outputs)")
    solve.add_argument("--seed", type=int, default=None, help="override the spec's base_seed")
    solve.add_argument("--jobs", type=int, default=1)
    solve.add_argument("--trace", action="store_true", help="write per-iteration trace CSVs")

    oracle = sub.add_parser("oracle", help="exhaustive pure-strategy bounds on a tiny spec")
    oracle.add_argument("--spec", required=True)
    oracle.add_argument("--out", required=True)
    oracle.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    oracle.add_argument("--replicate", type=int, default=0)

    verify = sub.add_parser("verify", help="re-certify a stored per-run result JSON")
    verify.add_argument("--result", required=True)

    summ = sub.add_parser("summarize", help="recompute summary.csv from results.csv")
    summ.add_argument("--in", dest="inp", required=True)
    summ.add_argument("--out", required=True)
    return p


def cli_main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_summarize(args)
    except SpecValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetExceededError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _cmd_gen(args) -> int:
    spec = parse_spec(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else derive_seed(
        spec.base_seed, "data", args.replicate)
    strategy = equilibrium_strategy(spec.original, spec.type_distribution)
    D = generate_dataset(spec.scenario(0), seed, strategy=strategy)
    dataset_to_csv(D, spec.original, out / "dataset.csv", out / "dataset_types.csv")
    meta = {"scenario": spec.name, "seed": seed, "n_data": spec.n_data,
            "eps_gen": strategy.eps_gen, "strategy": strategy.label}
    (out / "dataset_meta.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {out / 'dataset.csv'} (m={len(D)}, eps_gen={strategy.eps_gen:.3e})")
    return EXIT_OK


def _cmd_solve(args) -> int:
    import dataclasses

    spec = parse_spec(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, base_seed=args.seed)
    out = args.out if args.out is not None else spec.outputs
    rows = run(spec, out, jobs=args.jobs, trace=args.trace)
    n_conv = sum(1 for r in rows if r.converged)
    print(f"wrote {Path(out) / 'results.csv'}: {len(rows)} rows, {n_conv} converged")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    import csv

    spec = parse_spec(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = derive_seed(spec.base_seed, "data", args.replicate)
    strategy = equilibrium_strategy(spec.original, spec.type_distribution)
    D = generate_dataset(spec.scenario(0), seed, strategy=strategy)
    report = {}
    witness_rows = []
    for tag, Gp in spec.counterfactuals:
        v = ValuationSpec(spec.valuation, Gp)
        per_eps = {}
        for eps in spec.epsilons:
            res = enumerate_bounds(spec.original, Gp, D, float(eps), v, budget=args.budget)
            per_eps[repr(float(eps))] = res.to_json_dict()
            for side, wit in (("pessimistic", res.pessimistic_witness),
                              ("optimistic", res.optimistic_witness)):
                if wit is not None:
                    for j, (t, a) in enumerate(wit):
                        witness_rows.append([tag, repr(float(eps)), side, j, t, a])
        report[tag] = per_eps
    path = out / "oracle.json"
    path.write_text(json.dumps(report, indent=2))
    with open(out / "oracle_witnesses.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["counterfactual_tag", "epsilon", "side", "j", "type_index", "action_index"])
        w.writerows(witness_rows)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    ok, message = verify_result_file(args.result)
    print(message)
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_summarize(args) -> int:
    rows = read_results_csv(args.inp)
    write_summary(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} input rows)")
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
