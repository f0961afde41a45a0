from __future__ import annotations

import functools
import operator
from collections.abc import Iterator

import numpy as np
import pytest

from rbmscope.exceptions import DimensionError
from rbmscope.exceptions import ValidationError
from rbmscope.statespace import Face
from rbmscope.statespace import Partition
from rbmscope.statespace import State
from rbmscope.statespace import balanced_cubical_partition
from rbmscope.statespace import check_dimension
from rbmscope.statespace import enumerate_cubical_partitions
from rbmscope.statespace import exchangeable_partition
from rbmscope.statespace import face_members
from rbmscope.statespace import hamming_distance
from rbmscope.statespace import is_edge
from rbmscope.statespace import random_cubical_partition
from rbmscope.statespace import state_matrix


class TestStates:
    def test_bits_are_little_endian(self) -> None:
        state = State(1, 3)
        assert state.bits == (1, 0, 0)
        assert str(state) == "100"
        assert State(3, 2).bits == (1, 1)

    def test_out_of_range_state(self) -> None:
        with pytest.raises(ValidationError):
            State(8, 3)

    def test_state_matrix(self) -> None:
        matrix = state_matrix(2)
        np.testing.assert_array_equal(matrix, [[0, 0], [1, 0], [0, 1], [1, 1]])
        with pytest.raises(ValueError):
            matrix[0, 0] = 1.0

    def test_hamming(self) -> None:
        assert hamming_distance(0b101, 0b011) == 2
        assert is_edge(0b00, 0b10)
        assert not is_edge(0b01, 0b10)
        assert not is_edge(3, 3)

    def test_dimension_guard(self) -> None:
        with pytest.raises(DimensionError):
            check_dimension(21)
        with pytest.raises(ValidationError):
            check_dimension(0)


class TestFace:
    def test_fixed_coordinates_select_indices(self) -> None:
        face = Face.from_pattern("10*")
        assert list(face.indices()) == [1, 5]
        assert face.dimension == 1
        assert face.cardinality == 2
        assert face.free_coordinates == (2,)

    def test_pattern_roundtrip(self) -> None:
        assert Face.from_pattern("1*0").pattern == "1*0"
        assert str(Face.full(3)) == "***"

    def test_anchor_and_opposite(self) -> None:
        face = Face.from_pattern("1*0")
        assert face.anchor == 1
        assert face.opposite == 3
        assert face.contains(3)
        assert not face.contains(5)

    def test_spanned(self) -> None:
        assert Face.spanned(3, [1, 5]) == Face.from_pattern("10*")
        assert Face.spanned(2, [0, 3]) == Face.full(2)
        assert Face.spanned(2, [2]) == Face.point(2, 2)

    def test_disjointness(self) -> None:
        assert Face.from_pattern("0**").is_disjoint(Face.from_pattern("1**"))
        assert not Face.from_pattern("0**").is_disjoint(Face.from_pattern("*0*"))

    def test_split(self) -> None:
        low, high = Face.full(2).split(1)
        assert list(low.indices()) == [0, 1]
        assert list(high.indices()) == [2, 3]
        with pytest.raises(ValidationError):
            low.split(1)

    def test_members(self) -> None:
        assert [str(state) for state in face_members(Face.from_pattern("*1"))] == ["01", "11"]

    def test_invalid_faces(self) -> None:
        with pytest.raises(ValidationError):
            Face(3, 0b1000, 0)
        with pytest.raises(ValidationError):
            Face(3, 0b001, 0b010)
        with pytest.raises(ValidationError):
            Face.from_pattern("1x")

    def test_dict_roundtrip(self) -> None:
        face = Face.from_pattern("*01*")
        assert Face.from_dict(face.to_dict()) == face


class TestPartition:
    def test_blocks_are_normalized(self) -> None:
        partition = Partition(2, ((3, 2), (1, 0)))
        assert partition.blocks == ((0, 1), (2, 3))
        assert partition.is_cubical
        assert partition.sizes == (2, 2)

    def test_non_cubical_blocks(self) -> None:
        partition = Partition(2, ((0, 3), (1, 2)))
        assert not partition.is_cubical
        with pytest.raises(ValidationError):
            partition.cubical_faces()

    def test_validation(self) -> None:
        with pytest.raises(ValidationError):
            Partition(2, ((0, 1), (1, 2, 3)))
        with pytest.raises(ValidationError):
            Partition(2, ((0, 1),))
        with pytest.raises(ValidationError):
            Partition(2, ((0, 4),), covers=False)
        assert len(Partition(2, ((0, 1),), covers=False)) == 1

    def test_labels(self) -> None:
        partition = Partition(2, ((0, 1),), covers=False)
        assert list(partition.labels()) == [0, 0, -1, -1]

    def test_from_dict_accepts_patterns(self) -> None:
        partition = Partition.from_dict({"n": 2, "blocks": ["*0", "*1"]})
        assert partition.blocks == ((0, 1), (2, 3))
        assert Partition.from_dict(partition.to_dict()) == partition

    def test_balanced_cubical_partition(self) -> None:
        partition = balanced_cubical_partition(4, 3)
        assert sorted(partition.sizes) == [4, 4, 8]
        assert partition.is_cubical
        assert balanced_cubical_partition(3, 1).sizes == (8,)
        assert balanced_cubical_partition(3, 4).sizes == (2, 2, 2, 2)
        with pytest.raises(ValidationError):
            balanced_cubical_partition(3, 5)

    def test_exchangeable_partition(self) -> None:
        partition = exchangeable_partition(3)
        assert partition.sizes == (1, 3, 3, 1)
        assert not partition.is_cubical


class TestEnumeration:
    def test_square_has_eight_cubical_partitions(self) -> None:
        partitions = list(enumerate_cubical_partitions(2))
        assert len(partitions) == 8
        assert len({p.blocks for p in partitions}) == 8
        assert partitions[0].blocks == ((0, 1, 2, 3),)

    def test_block_limit(self) -> None:
        assert len(list(enumerate_cubical_partitions(1))) == 2
        assert len(list(enumerate_cubical_partitions(2, max_blocks=2))) == 3
        assert all(len(p) <= 3 for p in enumerate_cubical_partitions(3, max_blocks=3))

    def test_every_partition_is_cubical_and_distinct(self) -> None:
        partitions = list(enumerate_cubical_partitions(3, max_blocks=4))
        assert all(p.is_cubical for p in partitions)
        assert len({p.blocks for p in partitions}) == len(partitions)

    def test_guards(self) -> None:
        with pytest.raises(DimensionError):
            next(enumerate_cubical_partitions(7))
        with pytest.raises(ValidationError):
            next(enumerate_cubical_partitions(2, max_blocks=0))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_matches_set_partition_oracle(self, n: int) -> None:
        expected = {
            tuple(sorted(tuple(sorted(block)) for block in blocks))
            for blocks in set_partitions(list(range(1 << n)))
            if all(spans_a_face(block) for block in blocks)
        }
        found = [p.blocks for p in enumerate_cubical_partitions(n, 1 << n)]
        assert len(found) == len(set(found))
        assert set(found) == expected


def set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for blocks in set_partitions(rest):
        for i, block in enumerate(blocks):
            yield [*blocks[:i], [first, *block], *blocks[i + 1 :]]
        yield [[first], *blocks]


def spans_a_face(block: list[int]) -> bool:
    varying = functools.reduce(operator.or_, block) ^ functools.reduce(operator.and_, block)
    return len(block) == 1 << varying.bit_count()


class TestRandomPartition:
    def test_covering(self) -> None:
        partition = random_cubical_partition(4, 5, seed=1)
        assert len(partition) == 5
        assert partition.covers
        assert partition.is_cubical

    def test_partial(self) -> None:
        partition = random_cubical_partition(4, 5, seed=1, partial=True)
        assert len(partition) == 5
        assert not partition.covers
        assert partition.is_cubical

    def test_deterministic(self) -> None:
        first = random_cubical_partition(5, 6, seed=7)
        second = random_cubical_partition(5, 6, seed=7)
        assert first == second
