"""Command-line entry point.

Subcommands mirror the pipeline stages::

    trollmap extract comments.jsonl -o features.csv
    trollmap train features.csv -o model.json --seed 7
    trollmap detect model.json features.csv -o report.json
    trollmap significance model.json features.csv
    trollmap export-planes model.json -o planes/
    trollmap run comments.jsonl -o out/ --seed 7

Every subcommand accepts ``--config FILE``, a flat JSON object whose keys are
``PipelineConfig`` fields; explicit flags override it.

Exit codes: 0 success, 2 input/schema error, 3 numeric or degenerate data,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import InputError, TrollmapError
from .features import read_matrix_csv, write_matrix_csv
from .pipeline import Model, PipelineConfig, detect_stage, export_planes, extract_stage, run_pipeline, train_stage

logger = logging.getLogger("trollmap")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _grid(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _add_input_flags(p):
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--min-messages", type=int, dest="min_messages")
    p.add_argument("--lenient", action="store_true", help="skip malformed records instead of failing")
    p.add_argument("--homoglyphs", action="store_true", help="fold Latin look-alike letters into Cyrillic")
    p.add_argument("--symbols", help="ten tracked symbols as one string, replacing 'аеиоуэюя!?'")


def _add_som_flags(p):
    p.add_argument("--grid", type=_grid, help="map size as WIDTHxHEIGHT (default 10x10)")
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--lr-start", type=float, dest="lr_start")
    p.add_argument("--lr-end", type=float, dest="lr_end")
    p.add_argument("--radius-start", type=float, dest="radius_start")
    p.add_argument("--radius-end", type=float, dest="radius_end")
    p.add_argument("--init", choices=["random_uniform_in_data_box", "pca_plane"])
    p.add_argument("--early-stopping", action="store_true", dest="early_stopping")
    p.add_argument("--seed", type=int)


def _add_cluster_flags(p):
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--workers", type=int, help="threads for the cluster-count search (results do not change)")


def _add_detect_flags(p):
    p.add_argument("--z-threshold", type=float, dest="z_threshold")
    p.add_argument("--max-cluster-fraction", type=float, dest="max_cluster_fraction")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="flat JSON config file")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="trollmap", description="Find trolls in a discussion thread with a Kohonen map.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common], argument_default=argparse.SUPPRESS)

    p = add("extract", "comments -> per-user feature CSV")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    _add_input_flags(p)

    p = add("train", "feature CSV -> trained map (JSON)")
    p.add_argument("features", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    _add_som_flags(p)

    p = add("detect", "model + feature CSV -> troll report (JSON)")
    p.add_argument("model", type=Path)
    p.add_argument("features", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    _add_cluster_flags(p)
    _add_detect_flags(p)

    p = add("significance", "print the per-feature significance table")
    p.add_argument("model", type=Path)
    p.add_argument("features", type=Path)
    _add_cluster_flags(p)

    p = add("export-planes", "write component planes and the cluster map as netpbm images")
    p.add_argument("model", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--scale", type=int, dest="plane_scale", help="pixels per node side (default 1)")
    _add_cluster_flags(p)

    p = add("run", "full pipeline: comments -> features, model, report, images")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--scale", type=int, dest="plane_scale")
    _add_input_flags(p)
    _add_som_flags(p)
    _add_cluster_flags(p)
    _add_detect_flags(p)
    return parser


RESERVED = {"command", "config", "verbose", "input", "output", "features", "model"}


def make_config(args: argparse.Namespace) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        try:
            values = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {args.config}: {exc}") from None
        if not isinstance(values, dict):
            raise InputError(f"config file {args.config} must hold a JSON object")
    for key, value in vars(args).items():
        if key in RESERVED:
            continue
        if key == "grid":
            values["grid_width"], values["grid_height"] = value
        elif key == "symbols":
            values["symbols"] = tuple(value)
        else:
            values[key] = value
    try:
        return PipelineConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from None


def _load_model(path: Path) -> Model:
    return Model.from_json(path.read_text(encoding="utf-8"))


def _load_features(path: Path):
    return read_matrix_csv(path.read_text(encoding="utf-8"))


def _dispatch(args, config: PipelineConfig) -> None:
    cmd = args.command
    if cmd == "extract":
        matrix = extract_stage(args.input.read_bytes(), config)
        args.output.write_text(write_matrix_csv(matrix), encoding="utf-8")
        logger.info("wrote %d users to %s", len(matrix), args.output)
    elif cmd == "train":
        model = train_stage(_load_features(args.features), config)
        args.output.write_text(model.to_json(), encoding="utf-8")
        logger.info("final quantization error %.6g", model.trained.qe_history[-1])
    elif cmd == "detect":
        report = detect_stage(_load_model(args.model), _load_features(args.features), config)
        args.output.write_text(report.to_json(), encoding="utf-8")
        print("\n".join(report.trolls))
    elif cmd == "significance":
        report = detect_stage(_load_model(args.model), _load_features(args.features), config)
        print(report.significance.table())
    elif cmd == "export-planes":
        for path in export_planes(_load_model(args.model), args.output, config):
            logger.info("wrote %s", path)
    elif cmd == "run":
        config.input = str(args.input)
        config.output_dir = str(args.output)
        report = run_pipeline(config)
        print("\n".join(report.trolls))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = make_config(args)
        _dispatch(args, config)
    except TrollmapError as exc:
        where = getattr(exc, "stage", None)
        print(f"error{f' in stage {where}' if where else ''}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_INPUT, EXIT_NUMERIC) else EXIT_INPUT
    except OSError as exc:
        where = getattr(exc, "stage", None)
        print(f"I/O error{f' in stage {where}' if where else ''}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
