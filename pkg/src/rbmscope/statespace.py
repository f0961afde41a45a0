from __future__ import annotations

from collections.abc import Iterable
from collections.abc import Iterator
from dataclasses import dataclass
from functools import cache
from functools import cached_property
from typing import Any
from typing import Self

import numpy as np
import numpy.typing as npt

from rbmscope.exceptions import DimensionError
from rbmscope.exceptions import ValidationError

# Coordinate x_i (1-based) is bit i-1 of a state index.

MAX_DENSE_DIMENSION = 20
MAX_ENUMERATION_DIMENSION = 6

type IntArray = npt.NDArray[np.int64]
type FloatArray = npt.NDArray[np.float64]
type Seed = int | np.random.SeedSequence | np.random.Generator | None


def check_dimension(n: int, limit: int = MAX_DENSE_DIMENSION) -> None:
    if n < 1:
        raise ValidationError(f"Dimension must be positive, got {n}.")
    if n > limit:
        raise DimensionError("n", n, limit)


def full_mask(n: int) -> int:
    return (1 << n) - 1


def hamming_distance(x: int, y: int) -> int:
    return (x ^ y).bit_count()


def is_edge(x: int, y: int) -> bool:
    return hamming_distance(x, y) == 1


@cache
def _state_matrix(n: int) -> FloatArray:
    indices = np.arange(1 << n, dtype=np.int64)
    matrix = ((indices[:, None] >> np.arange(n)) & 1).astype(np.float64)
    matrix.setflags(write=False)
    return matrix


def state_matrix(n: int) -> FloatArray:
    """All states of {0,1}^n as rows, ascending index, column i holding x_{i+1}."""
    check_dimension(n)
    return _state_matrix(n)


@dataclass(frozen=True, order=True)
class State:
    index: int
    n: int

    def __post_init__(self) -> None:
        check_dimension(self.n)
        if not 0 <= self.index < 1 << self.n:
            raise ValidationError(f"State index {self.index} out of range for n = {self.n}.")

    def bit(self, coordinate: int) -> int:
        return (self.index >> coordinate) & 1

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple(self.bit(i) for i in range(self.n))

    def __str__(self) -> str:
        return "".join(str(bit) for bit in self.bits)


@dataclass(frozen=True)
class Face:
    """A cubical subset of {0,1}^n: the states v with (v & fixed_mask) == fixed_values."""

    n: int
    fixed_mask: int
    fixed_values: int

    def __post_init__(self) -> None:
        check_dimension(self.n)
        if self.fixed_mask & ~full_mask(self.n) or self.fixed_mask < 0:
            raise ValidationError(f"Fixed mask {self.fixed_mask:#b} exceeds {self.n} bits.")
        if self.fixed_values & ~self.fixed_mask:
            raise ValidationError("Fixed values set outside the fixed coordinates.")

    @classmethod
    def full(cls, n: int) -> Self:
        return cls(n, 0, 0)

    @classmethod
    def point(cls, n: int, index: int) -> Self:
        return cls(n, full_mask(n), index)

    @classmethod
    def from_pattern(cls, pattern: str) -> Self:
        mask = values = 0
        for coordinate, char in enumerate(pattern):
            match char:
                case "0":
                    mask |= 1 << coordinate
                case "1":
                    mask |= 1 << coordinate
                    values |= 1 << coordinate
                case "*":
                    pass
                case _:
                    raise ValidationError(f"Invalid face pattern character {char!r}.")
        return cls(len(pattern), mask, values)

    @classmethod
    def spanned(cls, n: int, states: Iterable[int]) -> Self:
        """The smallest face containing all given states."""
        states = list(states)
        if not states:
            raise ValidationError("Cannot span a face from no states.")
        both = full_mask(n)
        either = 0
        for state in states:
            both &= state
            either |= state
        free = both ^ either
        mask = full_mask(n) & ~free
        return cls(n, mask, both & mask)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            return cls(int(data["n"]), int(data["fixed_mask"]), int(data["fixed_values"]))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed face description: {data!r}.") from e

    def to_dict(self) -> dict[str, int]:
        return {"n": self.n, "fixed_mask": self.fixed_mask, "fixed_values": self.fixed_values}

    @property
    def pattern(self) -> str:
        chars = []
        for coordinate in range(self.n):
            if not (self.fixed_mask >> coordinate) & 1:
                chars.append("*")
            else:
                chars.append(str((self.fixed_values >> coordinate) & 1))
        return "".join(chars)

    @property
    def free_mask(self) -> int:
        return full_mask(self.n) & ~self.fixed_mask

    @property
    def free_coordinates(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if (self.free_mask >> i) & 1)

    @property
    def dimension(self) -> int:
        return self.free_mask.bit_count()

    @property
    def cardinality(self) -> int:
        return 1 << self.dimension

    @property
    def anchor(self) -> int:
        return self.fixed_values

    @property
    def opposite(self) -> int:
        return self.fixed_values | self.free_mask

    def contains(self, index: int) -> bool:
        return (index & self.fixed_mask) == self.fixed_values

    def indices(self) -> IntArray:
        offsets = np.arange(self.cardinality, dtype=np.int64)
        result = np.full(self.cardinality, self.fixed_values, dtype=np.int64)
        for position, coordinate in enumerate(self.free_coordinates):
            result |= ((offsets >> position) & 1) << coordinate
        return result

    def bitset(self) -> int:
        result = 0
        for index in self.indices():
            result |= 1 << int(index)
        return result

    def is_disjoint(self, other: Face) -> bool:
        common = self.fixed_mask & other.fixed_mask
        return bool(common & (self.fixed_values ^ other.fixed_values))

    def split(self, coordinate: int) -> tuple[Face, Face]:
        if not (self.free_mask >> coordinate) & 1:
            raise ValidationError(f"Coordinate {coordinate} is not free in face {self.pattern}.")
        mask = self.fixed_mask | 1 << coordinate
        return (
            Face(self.n, mask, self.fixed_values),
            Face(self.n, mask, self.fixed_values | 1 << coordinate),
        )

    def __str__(self) -> str:
        return self.pattern


def face_members(face: Face) -> tuple[State, ...]:
    return tuple(State(int(index), face.n) for index in face.indices())


@dataclass(frozen=True)
class Partition:
    """Disjoint blocks of {0,1}^n, covering the cube unless ``covers`` is false.

    With ``covers=False`` the blocks partition only a subset of the cube.
    """

    n: int
    blocks: tuple[tuple[int, ...], ...]
    covers: bool = True

    def __post_init__(self) -> None:
        check_dimension(self.n)
        size = 1 << self.n
        blocks = tuple(sorted((tuple(sorted(set(block))) for block in self.blocks), key=_min_or_0))
        seen: set[int] = set()
        for block in blocks:
            if not block:
                raise ValidationError("Partition blocks must be nonempty.")
            if block[0] < 0 or block[-1] >= size:
                raise ValidationError(f"Block {block} has states outside the {self.n}-cube.")
            if not seen.isdisjoint(block):
                raise ValidationError("Partition blocks must be pairwise disjoint.")
            seen.update(block)
        if self.covers and len(seen) != size:
            raise ValidationError("Partition blocks do not cover the cube.")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_faces(cls, n: int, faces: Iterable[Face], covers: bool = True) -> Self:
        blocks = []
        for face in faces:
            if face.n != n:
                raise ValidationError(f"Face {face} does not live in the {n}-cube.")
            blocks.append(tuple(int(i) for i in face.indices()))
        return cls(n, tuple(blocks), covers)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            n = int(data["n"])
            raw_blocks = data["blocks"]
            covers = bool(data.get("covers", True))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed partition description: {data!r}.") from e
        blocks = []
        for raw in raw_blocks:
            if isinstance(raw, dict):
                face = Face.from_dict(raw)
                blocks.append(tuple(int(i) for i in face.indices()))
            elif isinstance(raw, str):
                face = Face.from_pattern(raw)
                blocks.append(tuple(int(i) for i in face.indices()))
            else:
                blocks.append(tuple(int(i) for i in raw))
        return cls(n, tuple(blocks), covers)

    def to_dict(self) -> dict[str, Any]:
        blocks: list[Any] = [
            face.to_dict() if face is not None else list(block)
            for face, block in zip(self.faces, self.blocks)
        ]
        return {"n": self.n, "covers": self.covers, "blocks": blocks}

    @cached_property
    def faces(self) -> tuple[Face | None, ...]:
        result: list[Face | None] = []
        for block in self.blocks:
            face = Face.spanned(self.n, block)
            result.append(face if face.cardinality == len(block) else None)
        return tuple(result)

    @property
    def is_cubical(self) -> bool:
        return all(face is not None for face in self.faces)

    def cubical_faces(self) -> tuple[Face, ...]:
        faces = tuple(face for face in self.faces if face is not None)
        if len(faces) != len(self.blocks):
            raise ValidationError("Partition has non-cubical blocks.")
        return faces

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(block) for block in self.blocks)

    def labels(self) -> IntArray:
        """Block index of every state, -1 for states outside the union."""
        labels = np.full(1 << self.n, -1, dtype=np.int64)
        for label, block in enumerate(self.blocks):
            labels[list(block)] = label
        return labels

    def __len__(self) -> int:
        return len(self.blocks)


def _min_or_0(block: tuple[int, ...]) -> int:
    return block[0] if block else 0


def balanced_cubical_partition(n: int, blocks: int) -> Partition:
    """Cube split into m+1 faces of sizes 2^(k-1) and 2^k, k = n - floor(log(m+1))."""
    check_dimension(n)
    if not 1 <= blocks <= 1 << (n - 1):
        raise ValidationError(f"Block count must lie in [1, {1 << (n - 1)}], got {blocks}.")
    j = blocks.bit_length() - 1
    k = n - j
    halved = blocks - (1 << j)
    top_mask = full_mask(n) & ~full_mask(k)
    faces: list[Face] = []
    for top in range(1 << j):
        face = Face(n, top_mask, top << k)
        if top < halved:
            faces.extend(face.split(k - 1))
        else:
            faces.append(face)
    return Partition.from_faces(n, faces)


def exchangeable_partition(n: int) -> Partition:
    check_dimension(n)
    blocks = tuple(
        tuple(i for i in range(1 << n) if i.bit_count() == weight) for weight in range(n + 1)
    )
    return Partition(n, blocks)


def _submasks(mask: int) -> Iterator[int]:
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def enumerate_cubical_partitions(n: int, max_blocks: int | None = None) -> Iterator[Partition]:
    """Every partition of the cube into at most ``max_blocks`` faces, each exactly once.

    Blocks are generated in order of their smallest member, which makes the
    stream order canonical.
    """
    check_dimension(n, MAX_ENUMERATION_DIMENSION)
    limit = (1 << n) if max_blocks is None else max_blocks
    if limit < 1:
        raise ValidationError(f"max_blocks must be positive, got {limit}.")
    everything = (1 << (1 << n)) - 1
    cube = full_mask(n)

    def extend(covered: int, faces: list[Face]) -> Iterator[Partition]:
        if covered == everything:
            yield Partition.from_faces(n, faces)
            return
        if len(faces) == limit:
            return
        state = ((~covered) & (covered + 1)).bit_length() - 1
        for free in _submasks(cube & ~state):
            face = Face(n, cube & ~free, state)
            members = face.bitset()
            if members & covered:
                continue
            faces.append(face)
            yield from extend(covered | members, faces)
            faces.pop()

    yield from extend(0, [])


def random_cubical_partition(
    n: int, blocks: int, seed: Seed = None, partial: bool = False
) -> Partition:
    """A random partition into ``blocks`` faces by repeated axis splits.

    With ``partial`` every block is shrunk to a random sub-face, giving a random
    partial partition instead of a covering one.
    """
    check_dimension(n)
    if not 1 <= blocks <= 1 << n:
        raise ValidationError(f"Block count must lie in [1, {1 << n}], got {blocks}.")
    rng = np.random.default_rng(seed)
    faces = [Face.full(n)]
    while len(faces) < blocks:
        candidates = [i for i, face in enumerate(faces) if face.dimension > 0]
        face = faces.pop(int(rng.choice(candidates)))
        coordinate = int(rng.choice(face.free_coordinates))
        faces.extend(face.split(coordinate))
    if partial:
        shrunk = []
        for face in faces:
            mask, values = face.fixed_mask, face.fixed_values
            for coordinate in face.free_coordinates:
                if rng.random() < 0.5:
                    mask |= 1 << coordinate
                    values |= int(rng.integers(2)) << coordinate
            shrunk.append(Face(n, mask, values))
        faces = shrunk
    return Partition.from_faces(n, faces, covers=not partial)
