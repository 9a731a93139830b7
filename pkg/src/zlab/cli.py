"""Command line entry point: ``zlab <kind> --config PATH [--out PATH] [--seed N] [--preset NAME]``.

Exit codes: 0 pass, 1 invariant failure, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import sys
from typing import Any

import click

from .errors import ConfigError, ZlabError
from .harness import KINDS, PRESETS, parse_config, preset_data, read_config_data, run_experiment


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _selftest() -> int:
    from .acceptance import run_all

    results = run_all(report=lambda r: click.echo(r.line()))
    failed = [r.number for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def _run(kind: str, config: str | None, out: str | None, seed: int | None, preset_name: str | None) -> int:
    if kind == "selftest":
        return _selftest()
    if config is None and preset_name is None:
        raise ConfigError("need --config or --preset")
    data: dict[str, Any] = preset_data(preset_name) if preset_name else {}
    if config is not None:
        data = _merge(data, read_config_data(config))
    data["kind"] = kind
    if seed is not None:
        data["seed"] = seed
    outcome = run_experiment(parse_config(data), out=out)
    if outcome.path is None:
        click.echo(outcome.csv_text, nl=False)
    else:
        click.echo(f"wrote {outcome.path} ({len(outcome.curve.rows)} rows)", err=True)
    return 0


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("kind", type=click.Choice(KINDS))
@click.option("--config", "config", type=click.Path(dir_okay=False), help="JSON experiment config.")
@click.option("--out", type=click.Path(dir_okay=False), help="CSV output path (stdout when omitted).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Seed for randomized instances.")
@click.option("--preset", "preset_name", type=click.Choice(PRESETS), help="Start from a canned scenario.")
def main(kind: str, config: str | None, out: str | None, seed: int | None, preset_name: str | None) -> None:
    """Run a zeno, adiabatic, ergodic or bounds experiment, or the selftest suite."""
    try:
        code = _run(kind, config, out, seed, preset_name)
    except ZlabError as exc:
        click.echo(f"error: {exc}", err=True)
        code = exc.exit_code
    sys.exit(code)


if __name__ == "__main__":
    main()
