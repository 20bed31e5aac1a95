"""``snn`` command line: run experiments, export recorded state, inspect network files.

Exit codes: 0 success, 1 other failure, 2 config error, 3 data error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, DataError, NumericError, SerializationError, SNNError
from .experiments import default_output_dir, export_states, load_config, run_experiment
from .serialization import read_header

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = Path(args.out) if args.out else default_output_dir(cfg)
    metrics = run_experiment(cfg, out)
    for key in sorted(metrics):
        print(f"{key}\t{metrics[key]}")
    print(f"outputs in {out}")
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    for path in export_states(args.run_dir, args.what, args.out):
        print(path)
    return EXIT_OK


def summarize(header: dict) -> dict:
    """Compact description of an SFNET header (no array payloads)."""
    return {
        "format": header["format"],
        "dt": header["dt"],
        "learning_enabled": header["learning_enabled"],
        "layers": [{"name": l["name"], "type": l["type"], "n": l["n"]} for l in header["layers"]],
        "connections": [
            {k: c[k] for k in ("source", "target", "type", "shape", "rule") if k in c} for c in header["connections"]
        ],
        "arrays": len(header["arrays"]),
    }


def _cmd_inspect(args: argparse.Namespace) -> int:
    try:
        data = Path(args.model).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {args.model}: {exc.strerror}") from None
    header, _ = read_header(data)
    print(json.dumps(header if args.full else summarize(header), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snn", description="Discrete-time spiking network experiments.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only print results")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="output directory (default: config output_dir or runs/<kind>-seed<N>)")
    run.set_defaults(func=_cmd_run)

    export = sub.add_parser("export", help="write recorded spikes, voltages or weights as files")
    export.add_argument("run_dir")
    export.add_argument("--what", choices=("spikes", "voltages", "weights"), required=True)
    export.add_argument("--out", help="destination (default: <run-dir>/export)")
    export.set_defaults(func=_cmd_export)

    inspect = sub.add_parser("inspect", help="describe an .sfnet network file")
    inspect.add_argument("model")
    inspect.add_argument("--full", action="store_true", help="print the whole header")
    inspect.set_defaults(func=_cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SerializationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
