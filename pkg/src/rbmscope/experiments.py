from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Callable
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from functools import partial
from pathlib import Path
from typing import Literal
from typing import TextIO

import numpy as np

from rbmscope.bounds import BOUND_COLUMNS
from rbmscope.bounds import bound_table
from rbmscope.bounds import theorem2_bound
from rbmscope.constructor import build_mixture_rbm
from rbmscope.distributions import MixtureComponent
from rbmscope.distributions import MixtureOfProducts
from rbmscope.distributions import ProductDistribution
from rbmscope.distributions import densify
from rbmscope.distributions import half_pair
from rbmscope.distributions import parity_distribution
from rbmscope.distributions import random_mixture
from rbmscope.exceptions import RbmScopeError
from rbmscope.exceptions import ValidationError
from rbmscope.exceptions import VerificationError
from rbmscope.projections import kl
from rbmscope.projections import project_partition
from rbmscope.rbm import TrainConfig
from rbmscope.rbm import random_init
from rbmscope.rbm import train_cd
from rbmscope.rbm import train_ml
from rbmscope.rbm import visible_distribution
from rbmscope.statespace import MAX_ENUMERATION_DIMENSION
from rbmscope.statespace import Face
from rbmscope.statespace import Partition
from rbmscope.statespace import check_dimension
from rbmscope.statespace import full_mask
from rbmscope.statespace import random_cubical_partition

logger = logging.getLogger(__name__)

type OutputFormat = Literal["csv", "json"]
type Cell = int | float | str | bool
type Row = tuple[Cell, ...]

PARITY_COLUMNS = ("m", "restart", "phase", "kl_bits", "bound_bits")
TRAJECTORY_COLUMNS = ("m", "restart", "epoch", "kl_bits")
CURVE_COLUMNS = ("k", "block_size", "kl_bits", "relative_error", "expected")
VERIFICATION_COLUMNS = ("trial", "sharpness", "kl_bits")

MAX_CURVE_DIMENSION = 12
VERIFICATION_THRESHOLD = 1e-3
MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class ResultTable:
    columns: tuple[str, ...]
    rows: list[Row] = field(default_factory=list)

    def column(self, name: str) -> list[Cell]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]

    def where(self, **values: Cell) -> list[Row]:
        indices = {self.columns.index(name): value for name, value in values.items()}
        return [row for row in self.rows if all(row[i] == v for i, v in indices.items())]

    def to_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)

    def to_json(self, stream: TextIO) -> None:
        rows = [[_json_cell(cell) for cell in row] for row in self.rows]
        json.dump({"columns": list(self.columns), "rows": rows}, stream, indent=2)
        stream.write("\n")

    def write(self, stream: TextIO, fmt: OutputFormat = "csv") -> None:
        match fmt:
            case "csv":
                self.to_csv(stream)
            case "json":
                self.to_json(stream)


def _json_cell(cell: Cell) -> Cell:
    if isinstance(cell, float) and not math.isfinite(cell):
        return str(cell)
    return cell


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 3
    m_min: int = 0
    m_max: int | None = None
    restarts: int = 20
    seed: int = 0
    train: TrainConfig = TrainConfig()
    refine_learning_rate: float = 0.1
    refine_epochs: int = 500
    ml_learning_rate: float = 1.0
    ml_epochs: int = 10000
    workers: int = 1
    output: Path | None = None
    format: OutputFormat = "csv"

    def __post_init__(self) -> None:
        check_dimension(self.n, MAX_ENUMERATION_DIMENSION)
        top = 1 << (self.n - 1)
        if self.m_max is None:
            object.__setattr__(self, "m_max", top)
        if not 0 <= self.m_min <= self.hidden_max <= top:
            raise ValidationError(
                f"Hidden range [{self.m_min}, {self.m_max}] must lie within [0, {top}]."
            )
        if self.restarts < 1:
            raise ValidationError(f"Restart count must be positive, got {self.restarts}.")
        if self.workers < 1:
            raise ValidationError(f"Worker count must be positive, got {self.workers}.")
        if self.refine_learning_rate < 0 or self.ml_learning_rate < 0:
            raise ValidationError("Learning rates must be non-negative.")
        if self.refine_epochs < 0 or self.ml_epochs < 0:
            raise ValidationError("Epoch counts must be non-negative.")
        if self.format not in ("csv", "json"):
            raise ValidationError(f"Unknown output format {self.format!r}.")

    @property
    def hidden_max(self) -> int:
        assert self.m_max is not None
        return self.m_max

    @property
    def hidden_range(self) -> range:
        return range(self.m_min, self.hidden_max + 1)


def _run_tasks[K, R](
    task: Callable[[K], R], keys: Iterable[K], workers: int
) -> list[tuple[K, R]]:
    keys = list(keys)
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, keys))
    else:
        results = [task(key) for key in keys]
    return list(zip(keys, results))


def _child_seed(sequence: np.random.SeedSequence) -> int:
    return int(sequence.generate_state(1)[0])


@dataclass(frozen=True)
class ParityReport:
    summary: ResultTable
    trajectories: ResultTable


def _parity_restart(
    config: ExperimentConfig, key: tuple[int, int]
) -> tuple[list[Row], list[Row]]:
    m, restart = key
    init_seq, cd_seq, refine_seq = np.random.SeedSequence(config.seed, spawn_key=key).spawn(3)
    target = parity_distribution(config.n)
    bound = theorem2_bound(config.n, m)

    params = random_init(config.n, m, config.train.init_range, init_seq)
    rows: list[Row] = [(m, restart, "init", kl(target, visible_distribution(params)), bound)]

    params = train_cd(params, target, replace(config.train, seed=_child_seed(cd_seq)))
    rows.append((m, restart, "cd", kl(target, visible_distribution(params)), bound))

    refine = replace(
        config.train,
        learning_rate=config.refine_learning_rate,
        epochs=config.refine_epochs,
        seed=_child_seed(refine_seq),
    )
    params = train_cd(params, target, refine)
    rows.append((m, restart, "cd_refine", kl(target, visible_distribution(params)), bound))

    ml = replace(config.train, learning_rate=config.ml_learning_rate, epochs=config.ml_epochs)
    result = train_ml(params, target, ml)
    rows.append((m, restart, "ml", result.final_kl, bound))
    trajectory: list[Row] = [
        (m, restart, epoch, value) for epoch, value in enumerate(result.trajectory)
    ]
    return rows, trajectory


def run_parity_experiment(config: ExperimentConfig) -> ParityReport:
    """Random init, CD, refined CD and exact ML on the parity target for every m and restart."""
    keys = [(m, restart) for m in config.hidden_range for restart in range(config.restarts)]
    results = _run_tasks(partial(_parity_restart, config), keys, config.workers)
    summary = ResultTable(PARITY_COLUMNS, [row for _, (rows, _) in results for row in rows])
    trajectories = ResultTable(
        TRAJECTORY_COLUMNS, [row for _, (_, trajectory) in results for row in trajectory]
    )
    for m in config.hidden_range:
        best = min(float(row[3]) for row in summary.where(m=m, phase="ml"))
        logger.info(
            "parity n=%d m=%d: best ML KL %.4f bits, bound %.4f",
            config.n,
            m,
            best,
            theorem2_bound(config.n, m),
        )
    return ParityReport(summary, trajectories)


def run_partition_error_curve(n: int, seed: int = 0) -> ResultTable:
    """Relative error of the best partition-model fit of 1/2 (delta_0 + delta_1) by block size.

    Two faces of size 2^k, one through 0...0 and one through 1...1, separated by a
    common fixed coordinate; below k = n - 1 they cover only part of the cube.
    """
    if not 2 <= n <= MAX_CURVE_DIMENSION:
        raise ValidationError(f"n must lie in [2, {MAX_CURVE_DIMENSION}], got {n}.")
    ones = full_mask(n)
    target = half_pair(n, 0, ones)
    baseline = n - 1
    rows: list[Row] = []
    for k in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        separator = int(rng.integers(n))
        others = [i for i in range(n) if i != separator]
        zeros_free = sum(1 << int(i) for i in rng.choice(others, size=k, replace=False))
        ones_free = sum(1 << int(i) for i in rng.choice(others, size=k, replace=False))
        faces = [
            Face(n, ones & ~zeros_free, 0),
            Face(n, ones & ~ones_free, ones & ~ones_free),
        ]
        partition = Partition.from_faces(n, faces, covers=k == n - 1)
        divergence = project_partition(target, partition).divergence
        rows.append((k, 1 << k, divergence, divergence / baseline, k / baseline))
        logger.debug("partition curve n=%d k=%d: %.6g bits", n, k, divergence)
    return ResultTable(CURVE_COLUMNS, rows)


def _verification_trial(
    n: int,
    components: int,
    sharpness: tuple[float, ...],
    partition_model: bool,
    seed: int,
    trial: int,
) -> tuple[list[Row], list[str]]:
    partition_seq, mixture_seq = np.random.SeedSequence(seed, spawn_key=(trial,)).spawn(2)
    partition = random_cubical_partition(
        n, components, partition_seq, partial=not partition_model
    )
    target = random_mixture(partition, mixture_seq)
    if partition_model:
        target = MixtureOfProducts(
            tuple(
                MixtureComponent(c.weight, ProductDistribution.uniform(c.product.support))
                for c in target.components
            )
        )
    dense = densify(target)
    rows: list[Row] = []
    failures: list[str] = []
    try:
        for a in sharpness:
            model = visible_distribution(build_mixture_rbm(target, sharpness=a))
            rows.append((trial, a, kl(dense, model)))
    except RbmScopeError as e:
        return rows, [f"trial {trial}: {e}"]
    values = [float(row[2]) for row in rows]
    if any(later > earlier + MONOTONE_SLACK for earlier, later in zip(values, values[1:])):
        failures.append(f"trial {trial}: divergence not monotone in sharpness: {values}")
    if values and values[-1] >= VERIFICATION_THRESHOLD:
        failures.append(
            f"trial {trial}: divergence {values[-1]:.3g} at a = {sharpness[-1]}"
            f" exceeds {VERIFICATION_THRESHOLD}"
        )
    return rows, failures


def run_construction_verification(
    n: int,
    components: int,
    sharpness: Iterable[float] = (5.0, 10.0, 20.0, 30.0),
    trials: int = 50,
    seed: int = 0,
    *,
    partition_model: bool = False,
    workers: int = 1,
) -> ResultTable:
    """Build RBMs for random mixtures over a sharpness sweep and check the divergence.

    Raises VerificationError unless every trial decreases monotonically in the
    sharpness and ends below the threshold at the largest one.
    """
    sweep = tuple(sorted(float(a) for a in sharpness))
    if not sweep or sweep[0] <= 0:
        raise ValidationError("Sharpness sweep must hold positive values.")
    if trials < 1:
        raise ValidationError(f"Trial count must be positive, got {trials}.")
    if not 1 <= components <= 1 << n:
        raise ValidationError(f"Component count must lie in [1, {1 << n}], got {components}.")
    task = partial(_verification_trial, n, components, sweep, partition_model, seed)
    table_rows: list[Row] = []
    failures: list[str] = []
    for _, (rows, errors) in _run_tasks(task, range(trials), workers):
        table_rows.extend(rows)
        failures.extend(errors)
    if failures:
        raise VerificationError(
            f"{len(failures)} construction check(s) failed:\n" + "\n".join(failures),
            tuple(failures),
        )
    logger.info("construction verification n=%d: %d trials passed", n, trials)
    return ResultTable(VERIFICATION_COLUMNS, table_rows)


def run_bound_table(n: int, m_max: int) -> ResultTable:
    return ResultTable(BOUND_COLUMNS, [report.as_row() for report in bound_table(n, m_max)])


def write_result(
    table: ResultTable, output: Path | None, fmt: OutputFormat, stdout: TextIO
) -> None:
    if output is None:
        table.write(stdout, fmt)
        return
    output.parent.mkdir(parents=True, exist_ok=True)
    with output.open("w", newline="") as stream:
        table.write(stream, fmt)
    logger.info("wrote %d rows to %s", len(table.rows), output)

