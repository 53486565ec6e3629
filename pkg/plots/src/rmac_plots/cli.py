"""Command line entry: ``plots <kind> --in DIR --out DIR``.

``DIR`` is an experiment output directory (results.csv plus per-run JSONs);
figures land in the output directory as PNG and SVG.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import PlotJob, render


def main(argv: list[str] | None = None) -> None:
    p = argparse.ArgumentParser(prog="plots",
                                description="Render figures from experiment outputs")
    p.add_argument("kind", choices=["bounds", "types", "strategies", "sweep"])
    p.add_argument("--in", dest="inp", required=True, help="experiment output directory")
    p.add_argument("--out", required=True, help="figure output directory")
    args = p.parse_args(argv)
    inp = Path(args.inp)
    job = PlotJob(kind=args.kind, results_csv=inp / "results.csv", runs_dir=inp,
                  out_dir=args.out)
    try:
        result = render(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not result.paths:
        print("no figure produced", file=sys.stderr)
        sys.exit(1)
    for path in result.paths:
        print(path)


if __name__ == "__main__":
    main()
