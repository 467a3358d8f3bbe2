"""Single entrypoint: ``python -m app.jobs.cli [global options] <subcommand> [options]``.

Global options (--config, --seed, --threads, --log-level, --output-dir,
--json-output) may come before or after the subcommand.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable

from app.jobs import interfere, prepare, robustness, scan_fwm, selftest

COMMANDS: dict[str, Callable[[list[str] | None], int]] = {
    "prepare": prepare.main,
    "scan-fwm": scan_fwm.main,
    "interfere": interfere.main,
    "robustness": robustness.main,
    "selftest": selftest.main,
}

# Global options that consume a value; used to skip that value when locating the subcommand.
_VALUE_OPTIONS = {"--config", "--seed", "--threads", "--log-level", "--output-dir"}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app.jobs.cli",
        description="Truncated-Wigner simulator of atomic four-wave mixing interferometry.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Subcommand to run.")
    return parser


def split_command(argv: list[str]) -> tuple[str | None, list[str]]:
    """Return (subcommand, argv for the subcommand with global options appended)."""
    skip = False
    for index, token in enumerate(argv):
        if skip:
            skip = False
            continue
        if token in _VALUE_OPTIONS:
            skip = True
            continue
        if token in COMMANDS:
            return token, argv[index + 1 :] + argv[:index]
    return None, argv


def main(argv: list[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    command, forwarded = split_command(args)
    if command is None:
        parser = _parser()
        if any(token in ("-h", "--help") for token in args):
            parser.print_help()
            return 0
        parser.print_usage(sys.stderr)
        return 2
    return COMMANDS[command](forwarded)


if __name__ == "__main__":
    raise SystemExit(main())
