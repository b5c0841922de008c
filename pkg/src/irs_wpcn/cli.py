"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .ao_optimizer import OptimizerConfig, optimize
from .channel_model import ScenarioConfig, generate, load_channels, save_channels
from .harness import load_sweep_file, optimizer_config_from_dict, run_sweep, write_csv, run_no_irs_baseline

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irs-wpcn", description="IRS-aided wireless-powered interference channel optimizer")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    gen = sub.add_parser("gen-channels", help="sample a channel set")
    gen.add_argument("--config", required=True, help="scenario JSON file")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)

    def optimizer_args(p):
        p.add_argument("--scheme", required=True, choices=["asy", "tdma", "syn"])
        p.add_argument("--channels", required=True, help="channel file from gen-channels")
        p.add_argument("--config", help="scenario JSON overriding the one stored with the channels")
        p.add_argument("--optimizer", help="JSON file with optimizer settings")
        p.add_argument("--seed", type=int, default=None, help="seed of the random IRS initialization")
        p.add_argument("--no-irs", action="store_true", help="pin every IRS vector to [0, ..., 0, 1]")
        p.add_argument("--out", required=True)

    opt = sub.add_parser("optimize", help="run the optimizer on one channel set")
    optimizer_args(opt)
    opt.add_argument("--timing", action="store_true", help="include wall time in the result file")

    tr = sub.add_parser("trace", help="write the objective trace, one value per line")
    optimizer_args(tr)

    sw = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    sw.add_argument("--spec", required=True, help="sweep JSON file")
    sw.add_argument("--out-csv", required=True)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--timing", action="store_true", help="record wall time per run")
    return parser


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _run_optimizer(args):
    channels, stored = load_channels(args.channels)
    cfg = ScenarioConfig.from_dict(_load_json(args.config)) if args.config else stored
    if cfg is None:
        raise UsageError("channel file carries no scenario; pass --config")
    if cfg.K != channels.K or cfg.M != channels.M or cfg.N != channels.N:
        raise UsageError("scenario dimensions do not match the channel file")
    opt_cfg = optimizer_config_from_dict(_load_json(args.optimizer)) if args.optimizer else OptimizerConfig()
    if args.seed is not None:
        opt_cfg = OptimizerConfig(**{**opt_cfg.__dict__, "seed": args.seed})
    if args.no_irs:
        return run_no_irs_baseline(channels, cfg, opt_cfg, args.scheme)
    return optimize(args.scheme, channels, cfg, opt_cfg)


def _dispatch(args) -> None:
    if args.command == "gen-channels":
        cfg = ScenarioConfig.from_dict(_load_json(args.config))
        seed = cfg.seed if args.seed is None else args.seed
        cfg = cfg.replace(seed=seed)
        save_channels(args.out, generate(cfg, seed), cfg)
    elif args.command == "optimize":
        result = _run_optimizer(args)
        Path(args.out).write_text(json.dumps(result.to_dict(include_timing=args.timing), indent=1))
    elif args.command == "trace":
        result = _run_optimizer(args)
        Path(args.out).write_text("objective\n" + "".join(f"{x!r}\n" for x in result.objective_trace))
    elif args.command == "sweep":
        spec, opt_cfg = load_sweep_file(args.spec)
        rows = run_sweep(spec, opt_cfg, workers=args.workers, record_timing=args.timing)
        write_csv(args.out_csv, rows)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        _dispatch(args)
    except UsageError as exc:
        print(f"irs-wpcn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"irs-wpcn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
