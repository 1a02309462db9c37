"""CLI: `plots convergence ...` and `plots compare ...`."""

from __future__ import annotations

import argparse
import sys

from .core import PlotSpec, plot_comparison, plot_convergence


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Charts from momarket CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_conv = sub.add_parser("convergence", help="smoothed training curves")
    p_conv.add_argument("--in", dest="inputs", action="append", required=True,
                        help="curves.csv (repeat for several runs)")
    p_conv.add_argument("--window", type=int, default=30)
    p_conv.add_argument("--skip", type=int, default=5000)
    p_conv.add_argument("--value", default="train_reward",
                        help="curve column to plot (default train_reward)")
    p_conv.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="metric bars with sd whiskers")
    p_cmp.add_argument("--in", dest="inputs", action="append", required=True,
                       help="metrics.csv (repeat to compare runs)")
    p_cmp.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.command == "convergence":
        spec = PlotSpec(inputs=args.inputs, out_path=args.out,
                        window=args.window, skip=args.skip, value_column=args.value)
        path = plot_convergence(spec)
    else:
        spec = PlotSpec(inputs=args.inputs, out_path=args.out)
        path = plot_comparison(spec)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
