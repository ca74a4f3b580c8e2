"""``dynbrw <subcommand> [--config FILE] [flags]``.

Flags override values read from the config file; with no config file the
flags alone describe the experiment (``--seed`` is then mandatory).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import KINDS, ConfigError, config_from_dict
from .experiments import run

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# flag name -> (config key, type)
_FLAGS = {
    "--seed": ("seed", int),
    "--format": ("format", str),
    "--replicates": ("replicates", int),
    "--depth": ("depth", int),
    "--horizon": ("horizon", float),
    "--mu": ("mu", str),
    "--group": ("group", str),
    "--law": ("law", str),
    "--m": ("m", float),
    "--rho": ("rho", float),
    "--n": ("n", int),
    "--n-max": ("n_max", int),
    "--k": ("k", int),
    "--k-max": ("k_max", int),
    "--levels": ("levels", int),
    "--delta": ("delta", float),
    "--t": ("t", float),
    "--workers": ("workers", int),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config")
    common.add_argument("--out", type=Path, help="write the report here instead of stdout")
    common.add_argument("--dump-labels", action="store_true", help="include label histories in JSON output")
    common.add_argument("--times", type=str, help="comma-separated query times (simulate)")
    for flag, (_, typ) in _FLAGS.items():
        common.add_argument(flag, type=typ, default=None)

    parser = argparse.ArgumentParser(prog="dynbrw", description="Dynamical branching random walks on Cayley graphs")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common])
    return parser


def config_dict(args: argparse.Namespace) -> dict:
    data: dict = {}
    if args.config is not None:
        data = tomllib.loads(args.config.read_text(encoding="utf-8"))
        if "kind" in data and data["kind"] != args.kind:
            raise ConfigError("kind", f"config says {data['kind']!r} but subcommand is {args.kind!r}")
    data["kind"] = args.kind
    for flag, (key, _) in _FLAGS.items():
        val = getattr(args, flag.lstrip("-").replace("-", "_"))
        if val is not None:
            data[key] = val
    if args.dump_labels:
        data["dump_labels"] = True
    if args.times is not None:
        data["times"] = [float(x) for x in args.times.split(",")]
    if args.kind == "tree" and "format" not in data:
        data["format"] = "csv"
    return data


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_dict(config_dict(args))
        report = run(cfg)
    except (ConfigError, ValueError, RuntimeError) as err:
        print(f"dynbrw {args.kind}: error: {err}", file=sys.stderr)
        return 2
    text = report.render(cfg.format)
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
