"""Command-line entry point: ``caimhng {explore,learn,plan,sweep,report}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .cai import DegeneratePlan
from .coordinator import plan_with_communication

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="run only this seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="caimhng", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("explore", parents=[common], help="random exploration episodes")
    sub.add_parser("learn", parents=[common], help="learn message models from episodes")
    sub.add_parser("plan", parents=[common], help="plan with communication from learned models")
    sub.add_parser("sweep", parents=[common], help="full pipeline, writes metrics.csv")
    sub.add_parser("report", parents=[common], help="print the learned message table")
    return parser


def _missing(path: Path, hint: str) -> int:
    print(f"caimhng: {path} not found; run `{hint}` first", file=sys.stderr)
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ex.ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.seeds = [args.seed]
            cfg.validate()
    except ex.ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"caimhng: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out

    if args.command == "sweep":
        ex.run_pipeline(cfg, out)
        print(f"wrote {out / 'metrics.csv'}")
        return EXIT_OK

    for seed in cfg.seeds:
        d = ex.seed_dir(out, seed)
        if args.command == "explore":
            ex.write_episode(out, seed, ex.explore(cfg, seed))
        elif args.command == "learn":
            if not (d / "episode.json").exists():
                return _missing(d / "episode.json", "explore")
            model_a, model_b, assign = ex.learn(cfg, ex.read_episode(out, seed), seed)
            ex.write_models(out, seed, model_a, model_b, assign)
        elif args.command == "plan":
            if not (d / "model_A.json").exists():
                return _missing(d / "model_A.json", "learn")
            models = ex.read_models(out, seed)
            grid, specs = cfg.make_grid(), cfg.make_specs()
            try:
                plan = plan_with_communication(models, grid, specs, cfg.T, max(cfg.C_sweep),
                                               cfg.mh_sweeps, seed, cfg.decode_mode,
                                               cfg.state_sample_mode)
            except DegeneratePlan as exc:
                print(f"caimhng: seed {seed}: degenerate plan: {exc}", file=sys.stderr)
                return EXIT_DEGENERATE
            cells = {c: plan.history[c] for c in cfg.C_sweep}
            ex.write_plans(out, seed, cells)
            for c in cfg.C_sweep:
                r = ex.metrics_row(seed, c, cells[c], specs)
                print(f"seed={seed} C={c} collisions={r.collisions} "
                      f"goal_a={r.goal_a} goal_b={r.goal_b}")
        elif args.command == "report":
            if not (d / "model_A.json").exists():
                return _missing(d / "model_A.json", "learn")
            model_a, model_b = ex.read_models(out, seed)
            rows = ex.export_message_report(model_a, model_b, ex.read_usage(out, seed, model_a.K))
            print(f"# seed {seed}")
            print(ex.format_report(rows, cfg.make_grid()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
