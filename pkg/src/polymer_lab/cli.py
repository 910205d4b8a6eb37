"""Command-line entry point: polymer-lab {run, simulate, crossover, oracle}."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .crossover import CrossoverParams, crossover_cdf
from .env import KINDS, EnvSpec
from .lab import BudgetError, ExperimentConfig, dump_json, run, simulate, to_csv
from .ustat import enumerate_oracle


def _s_grid(text: str) -> np.ndarray:
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a:b:step") from None
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError("need a <= b and step > 0")
    count = int(round((b - a) / step)) + 1
    return a + step * np.arange(count)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polymer-lab")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, help="override the config's out_dir")

    s = sub.add_parser("simulate", help="point-to-line replicas under beta n^-alpha")
    s.add_argument("--env", choices=KINDS, default="gaussian")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--alpha", type=float, default=0.25)
    s.add_argument("--replicas", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)

    c = sub.add_parser("crossover", help="tabulate the crossover CDF G_beta")
    c.add_argument("--beta", type=float, required=True)
    c.add_argument("--s-grid", type=_s_grid, required=True)
    c.add_argument("--quad-order", type=int, default=8)
    c.add_argument("--out", type=Path, required=True)

    o = sub.add_parser("oracle", help="exact oracles")
    osub = o.add_subparsers(dest="oracle", required=True)
    e = osub.add_parser("enumerate", help="exhaustive Rademacher enumeration of U-statistic moments")
    e.add_argument("--n", type=int, default=2)
    e.add_argument("--width", type=int, default=2)
    return p


def _join_grid(argv: list[str]) -> list[str]:
    # "--s-grid -3:2:0.1" would read the value as an option; glue it on
    out, it = [], iter(argv)
    for a in it:
        out.append(f"{a}={next(it, '')}" if a == "--s-grid" else a)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(_join_grid(argv))
    try:
        if args.command == "run":
            cfg = ExperimentConfig.from_json(args.config.read_text(encoding="utf-8"))
            if args.out:
                cfg.out_dir = str(args.out)
            rs = run(cfg)
            print(dump_json({"experiment": cfg.experiment, "passed": rs.passed, "out_dir": cfg.out_dir}), end="")
            return 0 if rs.passed or rs.passed is None else 1
        if args.command == "simulate":
            summary = simulate(EnvSpec(args.env), args.n, args.beta, args.alpha, args.replicas, args.seed, args.out)
            print(dump_json(summary), end="")
            return 0
        if args.command == "crossover":
            params = CrossoverParams(args.beta, quad_order=args.quad_order)
            res = crossover_cdf(args.s_grid, params)
            rows = [{"s": float(s), "G_beta": r.value, "self_convergence": r.self_convergence} for s, r in zip(args.s_grid, res)]
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.write_text(to_csv(rows, ["s", "G_beta", "self_convergence"]), encoding="utf-8", newline="")
            manifest = {"command": "crossover", "params": res[0].params, "s_grid": args.s_grid, "flagged": res[0].flagged, "version": __version__}
            args.out.with_suffix(".json").write_text(dump_json(manifest), encoding="utf-8")
            return 1 if res[0].flagged else 0
        if args.command == "oracle":
            print(dump_json(enumerate_oracle(args.n, args.width)), end="")
            return 0
    except (BudgetError, ValueError) as exc:
        print(f"polymer-lab: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
