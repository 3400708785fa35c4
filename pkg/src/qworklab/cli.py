"""``qwork-lab`` command-line runner.

Usage::

    qwork-lab list
    qwork-lab validate <config-file>
    qwork-lab [run] <experiment> [--config FILE] [--key value]...

Exit codes: 0 checks passed, 1 checks failed (or a numerical guard tripped),
2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import REGISTRY, ConfigError, list_experiments, normalize_key, resolve, validate
from .experiments import run as run_experiment

OUTPUT_ENV = "QWORK_LAB_OUTPUT"
DEFAULT_OUTPUT = "qwork-runs"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("qworklab")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[normalize_key(key)] = value.strip()
    return out


def parse_overrides(tokens: list[str]) -> dict[str, str]:
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}; overrides are --key value")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
        else:
            key = tok[2:]
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"{normalize_key(key)}: missing value for --{key}") from None
        out[normalize_key(key)] = value
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _config_echo(cfg: dict) -> str:
    lines = [f"experiment = {cfg['experiment']}"]
    for k in sorted(cfg):
        if k in ("experiment", "output") or cfg[k] is None:
            continue
        v = cfg[k]
        if isinstance(v, float):
            v = f"{v:.16e}"
        elif isinstance(v, list):
            v = ",".join(f"{x:.16e}" for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def run_directory(cfg: dict) -> Path:
    if cfg.get("output"):
        return Path(cfg["output"])
    root = Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))
    digest = hashlib.sha256(_config_echo(cfg).encode()).hexdigest()[:12]
    return root / f"{cfg['experiment']}-{digest}"


def write_outputs(directory: Path, cfg: dict, result, started: datetime, finished: datetime) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.txt").write_text(_config_echo(cfg))
    for name, text in result.tables.items():
        (directory / name).write_text(text)
    for name, doc in result.documents.items():
        (directory / name).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    summary = {
        "experiment": result.name,
        "topics": REGISTRY[result.name].topics,
        "passed": result.passed,
        "checks": result.checks,
        "summary": result.summary,
        "notes": result.notes,
        "files": sorted(["config.txt", *result.tables, *result.documents]),
        "metadata": {
            "config": {k: v for k, v in cfg.items() if k != "output"},
            "code_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started": started.isoformat(),
            "finished": finished.isoformat(),
        },
    }
    (directory / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")


def cmd_list() -> int:
    for e in list_experiments():
        print(f"{e['name']:<26} [{e['topics']}] {e['description']}")
    return EXIT_PASS


def cmd_validate(path: str) -> int:
    try:
        cfg = read_config_file(path)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    diags = validate(cfg)
    for d in diags:
        print(d)
    if diags:
        return EXIT_CONFIG
    print(f"{path}: valid configuration for {cfg['experiment']}")
    return EXIT_PASS


def cmd_run(experiment: str, tokens: list[str]) -> int:
    try:
        config = {}
        if "--config" in tokens:
            i = tokens.index("--config")
            if i + 1 >= len(tokens):
                raise ConfigError("config: missing value for --config")
            config.update(read_config_file(tokens[i + 1]))
            tokens = tokens[:i] + tokens[i + 2:]
        file_exp = config.get("experiment")
        if file_exp and file_exp != experiment:
            raise ConfigError(f"experiment: config file names {file_exp!r} but {experiment!r} was requested")
        config.update(parse_overrides(tokens))
        config["experiment"] = experiment
        cfg = resolve(config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    directory = run_directory(cfg)
    started = datetime.now(timezone.utc)
    try:
        result = run_experiment(config)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        # numerical guards (trajectory escape, non-finite amplitudes, ...) end the run as a failure
        print(f"{experiment}: run aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "config.txt").write_text(_config_echo(cfg))
        (directory / "summary.json").write_text(json.dumps(
            {"experiment": experiment, "passed": False, "error": f"{type(exc).__name__}: {exc}"}, indent=2) + "\n")
        return EXIT_FAIL
    write_outputs(directory, cfg, result, started, datetime.now(timezone.utc))

    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for note in result.notes:
        print(f"note: {note}")
    print(f"{experiment}: {'passed' if result.passed else 'FAILED'}; outputs in {directory}")
    return EXIT_PASS if result.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qwork-lab",
        description="Run quantum-work experiments and write CSV/JSON artifacts.",
        epilog=f"Default output root: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT}.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("command", help="list | validate FILE | [run] EXPERIMENT")
    p.add_argument("rest", nargs=argparse.REMAINDER, help="config file or --key value overrides")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd, rest = args.command, list(args.rest)
    if cmd == "list":
        return cmd_list()
    if cmd == "validate":
        if len(rest) != 1:
            print("error: validate takes exactly one config file", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_validate(rest[0])
    if cmd == "run":
        if not rest:
            print("error: run needs an experiment name", file=sys.stderr)
            return EXIT_CONFIG
        cmd, rest = rest[0], rest[1:]
    if cmd not in REGISTRY:
        print(f"error: experiment: unknown experiment {cmd!r}; try 'qwork-lab list'", file=sys.stderr)
        return EXIT_CONFIG
    return cmd_run(cmd, rest)


if __name__ == "__main__":
    sys.exit(main())
