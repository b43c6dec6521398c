"""Command-line entry point.

Exit status is 0 on success, 1 on a configuration or usage error and 2 on
a runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .runner import RunError, run_experiment, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits with the config-error status on bad usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ail", description="Selective sampling and imitation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "run": "run the experiment described by a config",
        "complexity": "compute complexity measures of the configured class",
        "separation": "compare interactive and offline imitation on the tree MDP",
        "validate": "check a config and report every problem",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return parser


def _load(path: str, seed, command: str):
    text = Path(path).read_text()
    cfg = parse_config(text, base_dir=str(Path(path).parent))
    if seed is not None:
        if seed < 0:
            raise ConfigError([f"line 0: seed must be nonnegative, got {seed}"])
        cfg = with_overrides(cfg, seed=seed)
    forced = {"complexity": "complexity", "separation": "bc-vs-il"}.get(command)
    if forced and cfg.kind != forced:
        raise ConfigError([f"line {cfg.lines.get('kind', 0)}: command {command!r} "
                           f"needs kind = {forced}, got {cfg.kind}"])
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK

    def say(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        cfg = _load(args.config, args.seed, args.command)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for line in exc.errors:
            print(f"{args.config}: {line}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        say(f"{args.config}: ok (kind = {cfg.kind})")
        return EXIT_OK
    say(f"running kind={cfg.kind} seed={cfg.seed} runs={cfg.runs}")
    try:
        files = run_experiment(cfg, out_dir=args.out, progress=say)
    except (RunError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    say(f"wrote {len(files)} files to {args.out or cfg.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
