from __future__ import annotations

import csv
import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Any
from typing import Self
from typing import TextIO

import numpy as np
from scipy.special import entr

from rbmscope.exceptions import ValidationError
from rbmscope.statespace import FloatArray
from rbmscope.statespace import Face
from rbmscope.statespace import IntArray
from rbmscope.statespace import Partition
from rbmscope.statespace import Seed
from rbmscope.statespace import check_dimension

NORMALIZATION_TOLERANCE = 1e-12
LN2 = math.log(2)


@dataclass(frozen=True, eq=False)
class Distribution:
    n: int
    probs: FloatArray

    def __post_init__(self) -> None:
        check_dimension(self.n)
        probs = np.array(self.probs, dtype=np.float64)
        if probs.shape != (1 << self.n,):
            raise ValidationError(
                f"Expected {1 << self.n} probabilities for n = {self.n}, got shape {probs.shape}."
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValidationError("Probabilities must be finite and non-negative.")
        if abs(math.fsum(probs) - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValidationError(f"Probabilities sum to {math.fsum(probs)!r}, not 1.")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def normalized(cls, n: int, weights: Iterable[float] | FloatArray) -> Self:
        values = np.asarray(weights, dtype=np.float64)
        total = math.fsum(values)
        if not total > 0:
            raise ValidationError("Cannot normalize weights with zero total mass.")
        return cls(n, values / total)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            return cls(int(data["n"]), np.asarray(data["probs"], dtype=np.float64))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed distribution description: {data!r}.") from e

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "probs": [float(x) for x in self.probs]}

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(("state_index", "probability"))
        writer.writerows((index, float(value)) for index, value in enumerate(self.probs))

    def support(self) -> IntArray:
        return np.flatnonzero(self.probs > 0)

    def mass(self, states: Iterable[int] | IntArray) -> float:
        return math.fsum(self.probs[np.asarray(list(states), dtype=np.int64)])

    def __getitem__(self, index: int) -> float:
        return float(self.probs[index])

    def __len__(self) -> int:
        return len(self.probs)

    def allclose(self, other: Distribution, atol: float = NORMALIZATION_TOLERANCE) -> bool:
        return self.n == other.n and bool(np.max(np.abs(self.probs - other.probs)) <= atol)


@dataclass(frozen=True)
class ProductDistribution:
    """A product of Bernoulli(theta_i) over the free coordinates of ``support``.

    ``theta`` lists one parameter per free coordinate, in ascending coordinate order.
    """

    support: Face
    theta: tuple[float, ...]

    def __post_init__(self) -> None:
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != self.support.dimension:
            raise ValidationError(
                f"Face {self.support} has {self.support.dimension} free coordinates,"
                f" got {len(theta)} parameters."
            )
        if not all(0.0 <= t <= 1.0 for t in theta):
            raise ValidationError("Bernoulli parameters must lie in [0, 1].")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, support: Face) -> Self:
        return cls(support, (0.5,) * support.dimension)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            return cls(Face.from_dict(data["support"]), tuple(data["theta"]))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed product description: {data!r}.") from e

    def to_dict(self) -> dict[str, Any]:
        return {"support": self.support.to_dict(), "theta": list(self.theta)}

    @property
    def n(self) -> int:
        return self.support.n


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    product: ProductDistribution


@dataclass(frozen=True)
class MixtureOfProducts:
    """Weighted products on pairwise disjoint faces.

    The component at ``base_index``, if any, is exempt from disjointness and may
    be supported anywhere.
    """

    components: tuple[MixtureComponent, ...]
    base_index: int | None = None

    def __post_init__(self) -> None:
        components = tuple(self.components)
        if not components:
            raise ValidationError("A mixture needs at least one component.")
        n = components[0].product.n
        if any(component.product.n != n for component in components):
            raise ValidationError("Mixture components live in different dimensions.")
        weights = [component.weight for component in components]
        if any(not (w >= 0) for w in weights):
            raise ValidationError("Mixture weights must be non-negative.")
        if abs(math.fsum(weights) - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValidationError(f"Mixture weights sum to {math.fsum(weights)!r}, not 1.")
        if self.base_index is not None and not 0 <= self.base_index < len(components):
            raise ValidationError(f"Base index {self.base_index} out of range.")
        faces = [
            component.product.support
            for i, component in enumerate(components)
            if i != self.base_index
        ]
        for i, face in enumerate(faces):
            for other in faces[i + 1 :]:
                if not face.is_disjoint(other):
                    raise ValidationError(f"Component supports {face} and {other} overlap.")
        object.__setattr__(self, "components", components)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            components = tuple(
                MixtureComponent(float(item["weight"]), ProductDistribution.from_dict(item))
                for item in data["components"]
            )
            base_index = data.get("base_index")
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed mixture description: {data!r}.") from e
        return cls(components, None if base_index is None else int(base_index))

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_index": self.base_index,
            "components": [
                {"weight": component.weight, **component.product.to_dict()}
                for component in self.components
            ],
        }

    @property
    def n(self) -> int:
        return self.components[0].product.n

    @property
    def faces(self) -> tuple[Face, ...]:
        return tuple(component.product.support for component in self.components)

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class BlockConditional:
    mass: float
    conditional: Distribution


def _product_values(product: ProductDistribution) -> tuple[IntArray, FloatArray]:
    indices = product.support.indices()
    coordinates = np.asarray(product.support.free_coordinates, dtype=np.int64)
    theta = np.asarray(product.theta, dtype=np.float64)
    bits = (indices[:, None] >> coordinates) & 1
    values = np.prod(np.where(bits == 1, theta, 1.0 - theta), axis=1)
    return indices, values


def densify(p: ProductDistribution | MixtureOfProducts) -> Distribution:
    probs = np.zeros(1 << p.n)
    match p:
        case ProductDistribution():
            indices, values = _product_values(p)
            probs[indices] = values
        case MixtureOfProducts():
            for component in p.components:
                indices, values = _product_values(component.product)
                probs[indices] += component.weight * values
    return Distribution(p.n, probs)


def uniform(n: int) -> Distribution:
    check_dimension(n)
    return Distribution(n, np.full(1 << n, 1.0 / (1 << n)))


def point_mass(n: int, index: int) -> Distribution:
    check_dimension(n)
    probs = np.zeros(1 << n)
    probs[index] = 1.0
    return Distribution(n, probs)


def half_pair(n: int, x: int, y: int) -> Distribution:
    check_dimension(n)
    probs = np.zeros(1 << n)
    probs[x] += 0.5
    probs[y] += 0.5
    return Distribution(n, probs)


def parity_distribution(n: int) -> Distribution:
    """Uniform distribution on the states with an even number of ones."""
    check_dimension(n)
    even = np.array([i.bit_count() % 2 == 0 for i in range(1 << n)])
    return Distribution(n, np.where(even, 2.0 ** -(n - 1), 0.0))


def random_distribution(n: int, seed: Seed = None) -> Distribution:
    check_dimension(n)
    rng = np.random.default_rng(seed)
    return Distribution.normalized(n, rng.dirichlet(np.ones(1 << n)))


def random_mixture(partition: Partition, seed: Seed = None) -> MixtureOfProducts:
    rng = np.random.default_rng(seed)
    faces = partition.cubical_faces()
    weights = rng.dirichlet(np.ones(len(faces)))
    weights /= math.fsum(weights)
    components = tuple(
        MixtureComponent(
            float(weight), ProductDistribution(face, tuple(rng.uniform(size=face.dimension)))
        )
        for weight, face in zip(weights, faces)
    )
    return MixtureOfProducts(components)


def restrict(p: Distribution, states: Face | Iterable[int]) -> Distribution:
    """The conditional of ``p`` on a set of states; uniform there if the set has no mass."""
    indices = states.indices() if isinstance(states, Face) else np.asarray(list(states))
    probs = np.zeros(1 << p.n)
    mass = math.fsum(p.probs[indices])
    if mass > 0:
        probs[indices] = p.probs[indices] / mass
    else:
        probs[indices] = 1.0 / len(indices)
    return Distribution.normalized(p.n, probs)


def block_conditionals(p: Distribution, partition: Partition) -> list[BlockConditional]:
    if partition.n != p.n:
        raise ValidationError(f"Partition of the {partition.n}-cube applied to n = {p.n}.")
    return [BlockConditional(p.mass(block), restrict(p, block)) for block in partition.blocks]


def reassemble(n: int, conditionals: Iterable[BlockConditional]) -> Distribution:
    probs = np.zeros(1 << n)
    for item in conditionals:
        probs += item.mass * item.conditional.probs
    return Distribution(n, probs)


def entropy(p: Distribution) -> float:
    return float(np.sum(entr(p.probs)) / LN2)
