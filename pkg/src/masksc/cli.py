"""Command line entry point: ``masksc run|compare|inspect-pairs|heatmap``.

Exit status: 0 success, 1 invalid input or config, 2 runtime/numeric
failure, 3 results written but some solver hit its iteration cap.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import data_io, experiment
from .errors import FormatError, InvalidInputError, MaskScError

log = logging.getLogger("masksc")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise InvalidInputError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value)
    for flag, key in (("model", "model"), ("n_trials", "n_trials"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def _pair(text: str) -> tuple[int, int]:
    try:
        i, j = text.split(",")
        return int(i), int(j)
    except ValueError:
        raise argparse.ArgumentTypeError(f"pairs look like i,j; got {text!r}") from None


def _run(args, compare: bool) -> int:
    fn = experiment.compare_models if compare else experiment.run_experiment
    report = fn(args.config, _overrides(args), output_dir=args.out)
    multi_p = isinstance(report.config["p"], list)
    print(experiment.format_table(report.rows, multi_p), end="")
    if report.output_dir:
        print(f"artifacts written to {report.output_dir}")
    if not report.converged:
        log.warning("at least one solver stopped at its iteration cap")
        return experiment.EXIT_NONCONVERGED
    return experiment.EXIT_OK


def _inspect(args) -> int:
    values = experiment.inspect_pairs(args.affinity, args.pairs)
    print(experiment.format_pairs(values), end="")
    return experiment.EXIT_OK


def _read_labels(path) -> np.ndarray:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines and not lines[0].lstrip("-").split(",")[0].isdigit():
        lines = lines[1:]
    col = -1  # labels_*.csv from `run` stores predicted,truth
    try:
        return np.array([int(ln.split(",")[col]) for ln in lines])
    except ValueError:
        raise FormatError(f"{path}: labels must be integers") from None


def _heatmap(args) -> int:
    Z = data_io.load_affinity(args.affinity)
    order = _read_labels(args.order) if args.order else None
    if order is not None and order.size != Z.shape[0]:
        raise InvalidInputError(f"{order.size} labels for an {Z.shape[0]}x{Z.shape[0]} affinity")
    data_io.render_heatmap(Z, args.output, order=order)
    print(f"wrote {args.output}")
    return experiment.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masksc", description="Masked subspace clustering experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run one model for n_trials trials"),
                        ("compare", "run several models with shared seeds")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON experiment file")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--model", help="model name (run only)" if name == "run" else argparse.SUPPRESS)
        p.add_argument("--n-trials", type=int, dest="n_trials")
        p.add_argument("--seed", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key; dotted keys reach into dataset/preprocess")

    p = sub.add_parser("inspect-pairs", help="print |phi(Z)_ij| for sample pairs")
    p.add_argument("affinity", help="MSCZ affinity file")
    p.add_argument("pairs", nargs="+", type=_pair, metavar="I,J")

    p = sub.add_parser("heatmap", help="render an affinity file as a PGM image")
    p.add_argument("affinity", help="MSCZ affinity file")
    p.add_argument("output", help="PGM path")
    p.add_argument("--order", help="label file (one per line, or labels_*.csv) to group rows by")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        # per-solve cap warnings are summarized by the exit status instead
        logging.getLogger("masksc.admm").setLevel(logging.ERROR)
        logging.getLogger("masksc.rmsc").setLevel(logging.ERROR)
    try:
        if args.command == "run":
            return _run(args, compare=False)
        if args.command == "compare":
            return _run(args, compare=True)
        if args.command == "inspect-pairs":
            return _inspect(args)
        return _heatmap(args)
    except (InvalidInputError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return experiment.EXIT_INVALID
    except (MaskScError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return experiment.EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
