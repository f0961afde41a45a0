from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from rbmscope.constructor import DEFAULT_SHARPNESS
from rbmscope.constructor import build_mixture_rbm
from rbmscope.distributions import Distribution
from rbmscope.distributions import MixtureOfProducts
from rbmscope.distributions import densify
from rbmscope.exceptions import RbmScopeError
from rbmscope.exceptions import VerificationError
from rbmscope.experiments import ExperimentConfig
from rbmscope.experiments import run_bound_table
from rbmscope.experiments import run_construction_verification
from rbmscope.experiments import run_parity_experiment
from rbmscope.experiments import run_partition_error_curve
from rbmscope.experiments import write_result
from rbmscope.projections import DisjointProductMixture
from rbmscope.projections import Independence
from rbmscope.projections import ModelClass
from rbmscope.projections import PartitionModel
from rbmscope.projections import kl
from rbmscope.projections import project
from rbmscope.rbm import TrainConfig
from rbmscope.rbm import visible_distribution
from rbmscope.statespace import Face
from rbmscope.statespace import Partition
from rbmscope.status import ExitStatus

OUTPUT_DIR_VARIABLE = "RBMSCOPE_OUTPUT_DIR"


class CommandError(Exception):
    def __init__(self, message: str, exit_code: int = ExitStatus.VALIDATION_ERROR):
        super().__init__(message)
        self.exit_code = exit_code


def resolve_output(path: Path | None) -> Path | None:
    if path is None or path.is_absolute():
        return path
    if base := os.environ.get(OUTPUT_DIR_VARIABLE):
        return Path(base) / path
    return path


def load_json(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise CommandError(f"Cannot read '{path}': {e.strerror}.") from e
    except json.JSONDecodeError as e:
        raise CommandError(f"'{path}' is not valid JSON: {e}.") from e
    if not isinstance(data, dict):
        raise CommandError(f"'{path}' must hold a JSON object.")
    return data


def emit_json(data: dict[str, Any], output: Path | None) -> None:
    text = json.dumps(data, indent=2) + "\n"
    if output is None:
        sys.stdout.write(text)
    else:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text)


def handle_bound_table(args: argparse.Namespace) -> None:
    table = run_bound_table(args.n, args.m_max)
    write_result(table, resolve_output(args.output), args.format, sys.stdout)


def handle_parity(args: argparse.Namespace) -> None:
    train = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        cd_steps=args.cd_k,
        init_range=args.init_range,
        cd_batch=args.cd_batch,
        finite_data=args.finite_data,
    )
    config = ExperimentConfig(
        n=args.n,
        m_min=args.m_min,
        m_max=args.m_max,
        restarts=args.restarts,
        seed=args.seed,
        train=train,
        refine_learning_rate=args.refine_lr,
        refine_epochs=args.refine_epochs,
        ml_learning_rate=args.ml_lr,
        ml_epochs=args.ml_epochs,
        workers=args.workers,
        output=resolve_output(args.output),
        format=args.format,
    )
    report = run_parity_experiment(config)
    write_result(report.summary, config.output, config.format, sys.stdout)
    if args.trajectory is not None:
        write_result(report.trajectories, resolve_output(args.trajectory), "csv", sys.stdout)


def handle_partition_curve(args: argparse.Namespace) -> None:
    table = run_partition_error_curve(args.n, args.seed)
    write_result(table, resolve_output(args.output), args.format, sys.stdout)


def handle_construct(args: argparse.Namespace) -> None:
    target = MixtureOfProducts.from_dict(load_json(args.input))
    params = build_mixture_rbm(target, args.base_index, args.sharpness)
    divergence = kl(densify(target), visible_distribution(params))
    result = {"sharpness": args.sharpness, "kl_bits": divergence, "rbm": params.to_dict()}
    emit_json(result, resolve_output(args.output))


def load_model(args: argparse.Namespace, n: int) -> ModelClass:
    if args.model == "independence":
        return Independence(Face.full(n) if args.face is None else Face.from_pattern(args.face))
    if args.partition is None:
        raise CommandError(f"Model '{args.model}' needs --partition.")
    partition = Partition.from_dict(load_json(args.partition))
    if args.model == "partition":
        return PartitionModel(partition)
    return DisjointProductMixture(partition)


def handle_project(args: argparse.Namespace) -> None:
    p = Distribution.from_dict(load_json(args.input))
    result = project(p, load_model(args, p.n))
    emit_json(result.to_dict(), resolve_output(args.output))


def handle_verify_construction(args: argparse.Namespace) -> None:
    table = run_construction_verification(
        args.n,
        args.components,
        args.sharpness or (5.0, 10.0, 20.0, DEFAULT_SHARPNESS),
        args.trials,
        args.seed,
        partition_model=args.partition_model,
        workers=args.workers,
    )
    write_result(table, resolve_output(args.output), args.format, sys.stdout)


def get_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Exact expressive-power tools for Restricted Boltzmann Machines.",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Log progress to stderr (repeat for debug output).",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    output_parser = argparse.ArgumentParser(add_help=False)
    output_parser.add_argument(
        "-o",
        "--output",
        type=Path,
        metavar="PATH",
        help=f"Write results to PATH instead of stdout (relative to ${OUTPUT_DIR_VARIABLE}).",
    )
    table_parser = argparse.ArgumentParser(add_help=False, parents=[output_parser])
    table_parser.add_argument(
        "--format",
        choices=["csv", "json"],
        default="csv",
        help="Result table format. (Choices: 'csv', 'json').",
    )
    seed_parser = argparse.ArgumentParser(add_help=False)
    seed_parser.add_argument("--seed", type=int, default=0, help="Master random seed.")
    workers_parser = argparse.ArgumentParser(add_help=False)
    workers_parser.add_argument(
        "-j", "--workers", type=int, default=1, help="Processes for independent runs."
    )

    parser_bounds = subparsers.add_parser(
        "bound-table",
        parents=[table_parser],
        help="Tabulate the worst-case divergence bounds.",
    )
    parser_bounds.add_argument("--n", type=int, required=True, help="Visible units.")
    parser_bounds.add_argument("--m-max", type=int, required=True, help="Largest hidden count.")
    parser_bounds.set_defaults(func=handle_bound_table)

    parser_parity = subparsers.add_parser(
        "parity",
        parents=[table_parser, seed_parser, workers_parser],
        help="Train RBMs on the parity distribution and compare with the bound.",
    )
    parser_parity.add_argument("--n", type=int, default=3, help="Visible units (at most 6).")
    parser_parity.add_argument("--m-min", type=int, default=0, help="Smallest hidden count.")
    parser_parity.add_argument(
        "--m-max", type=int, help="Largest hidden count (default 2^(n-1))."
    )
    parser_parity.add_argument("--restarts", type=int, default=20, help="Random restarts per m.")
    parser_parity.add_argument("--epochs", type=int, default=500, help="CD epochs.")
    parser_parity.add_argument("--lr", type=float, default=1.0, help="CD learning rate.")
    parser_parity.add_argument("--cd-k", type=int, default=1, help="Gibbs steps per CD update.")
    parser_parity.add_argument(
        "--init-range", type=float, default=10.0, help="Uniform init half-width."
    )
    parser_parity.add_argument(
        "--cd-batch", type=int, default=64, help="Samples drawn from the target per epoch."
    )
    parser_parity.add_argument(
        "--finite-data",
        action="store_true",
        help="Train CD on the support list instead of fresh samples.",
    )
    parser_parity.add_argument(
        "--refine-lr", type=float, default=0.1, help="Learning rate of the second CD phase."
    )
    parser_parity.add_argument(
        "--refine-epochs", type=int, default=500, help="Epochs of the second CD phase."
    )
    parser_parity.add_argument("--ml-lr", type=float, default=1.0, help="ML learning rate.")
    parser_parity.add_argument("--ml-epochs", type=int, default=10000, help="ML epochs.")
    parser_parity.add_argument(
        "--trajectory",
        type=Path,
        metavar="PATH",
        help="Also write per-epoch ML divergences as CSV to PATH.",
    )
    parser_parity.set_defaults(func=handle_parity)

    parser_curve = subparsers.add_parser(
        "partition-curve",
        parents=[table_parser, seed_parser],
        help="Relative error of two-block partition models by block size.",
    )
    parser_curve.add_argument("--n", type=int, required=True, help="Visible units (2 to 12).")
    parser_curve.set_defaults(func=handle_partition_curve)

    parser_construct = subparsers.add_parser(
        "construct",
        parents=[output_parser],
        help="Build RBM parameters for a mixture of products on disjoint faces.",
    )
    parser_construct.add_argument(
        "-i", "--input", type=Path, required=True, metavar="PATH", help="Mixture JSON file."
    )
    parser_construct.add_argument(
        "-a",
        "--sharpness",
        type=float,
        default=DEFAULT_SHARPNESS,
        help="Sharpness of the appended hidden units.",
    )
    parser_construct.add_argument(
        "--base-index", type=int, help="Component used as the starting product."
    )
    parser_construct.set_defaults(func=handle_construct)

    parser_project = subparsers.add_parser(
        "project",
        parents=[output_parser],
        help="Project a distribution onto a model and report the divergence.",
    )
    parser_project.add_argument(
        "-i", "--input", type=Path, required=True, metavar="PATH", help="Distribution JSON file."
    )
    parser_project.add_argument(
        "-m",
        "--model",
        choices=["independence", "partition", "mixture"],
        default="independence",
        help="Model class. (Choices: 'independence', 'partition', 'mixture').",
    )
    parser_project.add_argument(
        "-p", "--partition", type=Path, metavar="PATH", help="Partition JSON file."
    )
    parser_project.add_argument(
        "--face", metavar="PATTERN", help="Support face of the independence model, e.g. '1*0'."
    )
    parser_project.set_defaults(func=handle_project)

    parser_verify = subparsers.add_parser(
        "verify-construction",
        parents=[table_parser, seed_parser, workers_parser],
        help="Check the construction on random mixtures over a sharpness sweep.",
    )
    parser_verify.add_argument("--n", type=int, required=True, help="Visible units.")
    parser_verify.add_argument(
        "--components", type=int, required=True, help="Mixture components per trial."
    )
    parser_verify.add_argument("--trials", type=int, default=50, help="Random targets.")
    parser_verify.add_argument(
        "-a",
        "--sharpness",
        type=float,
        action="append",
        help="Sharpness value of the sweep. Can be specified multiple times.",
    )
    parser_verify.add_argument(
        "--partition-model",
        action="store_true",
        help="Use partition-model targets (uniform on every block).",
    )
    parser_verify.set_defaults(func=handle_verify_construction)

    return parser


def configure_logging(verbosity: int) -> None:
    levels = [logging.WARNING, logging.INFO, logging.DEBUG]
    logging.basicConfig(
        level=levels[min(verbosity, len(levels) - 1)],
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: Sequence[str] | None = None) -> None:
    args = get_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        args.func(args)
    except (CommandError, RbmScopeError, OSError) as e:
        if isinstance(e, CommandError):
            exit_code = e.exit_code
        elif isinstance(e, VerificationError):
            exit_code = ExitStatus.ASSERTION_FAILURE
        else:
            exit_code = ExitStatus.VALIDATION_ERROR

        print(f"Error: {e}", file=sys.stderr)
        sys.exit(exit_code)
    except KeyboardInterrupt:
        print("\nOperation aborted by user.", file=sys.stderr)
        sys.exit(ExitStatus.INTERRUPTED)


if __name__ == "__main__":
    main()
