from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any
from typing import Literal

import numpy as np
from scipy.special import rel_entr

from rbmscope.distributions import LN2
from rbmscope.distributions import Distribution
from rbmscope.distributions import ProductDistribution
from rbmscope.distributions import block_conditionals
from rbmscope.distributions import densify
from rbmscope.distributions import half_pair
from rbmscope.distributions import point_mass
from rbmscope.exceptions import SupportError
from rbmscope.exceptions import ValidationError
from rbmscope.statespace import FloatArray
from rbmscope.statespace import Face
from rbmscope.statespace import Partition
from rbmscope.statespace import enumerate_cubical_partitions
from rbmscope.statespace import state_matrix

type SearchModel = Literal["partition", "mixture"]


@dataclass(frozen=True)
class Independence:
    support: Face

    @classmethod
    def full(cls, n: int) -> Independence:
        return cls(Face.full(n))


@dataclass(frozen=True)
class PartitionModel:
    partition: Partition


@dataclass(frozen=True)
class DisjointProductMixture:
    partition: Partition

    def __post_init__(self) -> None:
        self.partition.cubical_faces()


type ModelClass = Independence | PartitionModel | DisjointProductMixture


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    projection: Distribution
    divergence: float

    def to_dict(self) -> dict[str, Any]:
        divergence: float | str = self.divergence if math.isfinite(self.divergence) else "inf"
        return {"divergence_bits": divergence, "projection": self.projection.to_dict()}


@dataclass(frozen=True, eq=False)
class MaxDivergence:
    value: float
    witness: Distribution


def kl(p: Distribution, q: Distribution) -> float:
    """D(p||q) in bits; math.inf when the support of p is not inside that of q."""
    if p.n != q.n:
        raise ValidationError(f"Dimension mismatch: {p.n} vs {q.n}.")
    terms = rel_entr(p.probs, q.probs)
    if np.isinf(terms).any():
        return math.inf
    return max(0.0, math.fsum(terms) / LN2)


def _check_support(p: Distribution, face: Face) -> None:
    inside = np.zeros(1 << p.n, dtype=bool)
    inside[face.indices()] = True
    if np.any(p.probs[~inside] > 0):
        raise SupportError(f"Distribution has mass outside the face {face}.")


def project_independence(p: Distribution, support: Face | None = None) -> ProjectionResult:
    face = Face.full(p.n) if support is None else support
    if face.n != p.n:
        raise ValidationError(f"Face {face} does not live in the {p.n}-cube.")
    _check_support(p, face)
    columns = state_matrix(p.n)[:, list(face.free_coordinates)]
    theta = np.clip(p.probs @ columns, 0.0, 1.0)
    projection = densify(ProductDistribution(face, tuple(theta)))
    return ProjectionResult(projection, kl(p, projection))


def multiinformation(p: Distribution) -> float:
    return project_independence(p).divergence


def _close_partial(
    p: Distribution, partition: Partition, probs: FloatArray
) -> ProjectionResult:
    # Models of a partial partition live on the union of its blocks.
    labels = partition.labels()
    if math.fsum(probs) == 0:
        probs = np.where(labels >= 0, 1.0, 0.0)
    projection = Distribution.normalized(p.n, probs)
    outside_mass = math.fsum(p.probs[labels < 0])
    divergence = math.inf if outside_mass > 0 else kl(p, projection)
    return ProjectionResult(projection, divergence)


def project_partition(p: Distribution, partition: Partition) -> ProjectionResult:
    if partition.n != p.n:
        raise ValidationError(f"Partition of the {partition.n}-cube applied to n = {p.n}.")
    probs = np.zeros(1 << p.n)
    for block in partition.blocks:
        probs[list(block)] = p.mass(block) / len(block)
    return _close_partial(p, partition, probs)


def project_disjoint_mixture(p: Distribution, partition: Partition) -> ProjectionResult:
    """Per block: the independence projection of the block conditional, scaled by block mass."""
    faces = partition.cubical_faces()
    probs = np.zeros(1 << p.n)
    for face, item in zip(faces, block_conditionals(p, partition)):
        inner = project_independence(item.conditional, face)
        probs += item.mass * inner.projection.probs
    return _close_partial(p, partition, probs)


def project(p: Distribution, model: ModelClass) -> ProjectionResult:
    match model:
        case Independence(support=face):
            return project_independence(p, face)
        case PartitionModel(partition=partition):
            return project_partition(p, partition)
        case DisjointProductMixture(partition=partition):
            return project_disjoint_mixture(p, partition)


def _largest_block(partition: Partition) -> tuple[int, ...]:
    return max(partition.blocks, key=len)


def _uncovered_point(partition: Partition) -> int | None:
    outside = np.flatnonzero(partition.labels() < 0)
    return int(outside[0]) if len(outside) else None


def max_divergence(model: ModelClass) -> MaxDivergence:
    match model:
        case Independence(support=face):
            if face.dimension == 0:
                return MaxDivergence(0.0, point_mass(face.n, face.anchor))
            witness = half_pair(face.n, face.anchor, face.opposite)
            return MaxDivergence(float(face.dimension - 1), witness)
        case PartitionModel(partition=partition):
            if (point := _uncovered_point(partition)) is not None:
                return MaxDivergence(math.inf, point_mass(partition.n, point))
            block = _largest_block(partition)
            return MaxDivergence(math.log2(len(block)), point_mass(partition.n, block[0]))
        case DisjointProductMixture(partition=partition):
            if (point := _uncovered_point(partition)) is not None:
                return MaxDivergence(math.inf, point_mass(partition.n, point))
            face = max(partition.cubical_faces(), key=lambda f: f.dimension)
            # singleton blocks: log|X_i| - 1 would be negative
            value = float(max(face.dimension - 1, 0))
            if face.dimension == 0:
                return MaxDivergence(value, point_mass(face.n, face.anchor))
            return MaxDivergence(value, half_pair(face.n, face.anchor, face.opposite))


def best_partition_projection(
    p: Distribution, max_blocks: int, model: SearchModel = "partition"
) -> tuple[Partition, ProjectionResult]:
    """Exhaustive search over cubical partitions; ties keep the earliest in canonical order."""
    projector = project_partition if model == "partition" else project_disjoint_mixture
    best: tuple[Partition, ProjectionResult] | None = None
    for partition in enumerate_cubical_partitions(p.n, max_blocks):
        result = projector(p, partition)
        if best is None or result.divergence < best[1].divergence:
            best = (partition, result)
    assert best is not None
    return best
