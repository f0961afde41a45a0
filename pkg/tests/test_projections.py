from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy.special import rel_entr

from rbmscope.distributions import LN2
from rbmscope.distributions import Distribution
from rbmscope.distributions import ProductDistribution
from rbmscope.distributions import block_conditionals
from rbmscope.distributions import densify
from rbmscope.distributions import half_pair
from rbmscope.distributions import parity_distribution
from rbmscope.distributions import point_mass
from rbmscope.distributions import random_distribution
from rbmscope.distributions import random_mixture
from rbmscope.distributions import restrict
from rbmscope.distributions import uniform
from rbmscope.exceptions import SupportError
from rbmscope.exceptions import ValidationError
from rbmscope.projections import DisjointProductMixture
from rbmscope.projections import Independence
from rbmscope.projections import ModelClass
from rbmscope.projections import PartitionModel
from rbmscope.projections import best_partition_projection
from rbmscope.projections import kl
from rbmscope.projections import max_divergence
from rbmscope.projections import multiinformation
from rbmscope.projections import project
from rbmscope.projections import project_disjoint_mixture
from rbmscope.projections import project_independence
from rbmscope.projections import project_partition
from rbmscope.statespace import Face
from rbmscope.statespace import Partition
from rbmscope.statespace import balanced_cubical_partition
from rbmscope.statespace import random_cubical_partition
from rbmscope.statespace import state_matrix


class TestKl:
    @pytest.mark.parametrize("n", range(1, 7))
    def test_parity_against_uniform_is_one_bit(self, n: int) -> None:
        assert kl(parity_distribution(n), uniform(n)) == pytest.approx(1.0, abs=1e-12)

    def test_identity(self) -> None:
        p = random_distribution(3, seed=0)
        assert kl(p, p) == 0.0

    def test_support_violation(self) -> None:
        assert kl(uniform(2), point_mass(2, 0)) == math.inf
        assert kl(point_mass(2, 0), uniform(2)) == pytest.approx(2.0)

    def test_dimension_mismatch(self) -> None:
        with pytest.raises(ValidationError):
            kl(uniform(2), uniform(3))


class TestIndependence:
    def test_parity_projects_to_uniform(self) -> None:
        result = project_independence(parity_distribution(3))
        assert result.projection.allclose(uniform(3))
        assert result.divergence == pytest.approx(1.0, abs=1e-12)
        assert multiinformation(parity_distribution(3)) == pytest.approx(1.0, abs=1e-12)

    def test_projection_keeps_marginals(self) -> None:
        p = random_distribution(4, seed=3)
        result = project_independence(p)
        states = state_matrix(4)
        np.testing.assert_allclose(result.projection.probs @ states, p.probs @ states, atol=1e-12)

    def test_projection_on_face(self) -> None:
        face = Face.from_pattern("1**")
        p = restrict(random_distribution(3, seed=4), face)
        result = project_independence(p, face)
        assert result.projection.mass(face.indices()) == pytest.approx(1.0, abs=1e-12)
        assert math.isfinite(result.divergence)

    def test_mass_off_the_face(self) -> None:
        with pytest.raises(SupportError):
            project_independence(uniform(2), Face.from_pattern("1*"))


class TestPartitionModels:
    def test_point_mass_spreads_over_block(self) -> None:
        partition = Partition(2, ((0, 1), (2, 3)))
        result = project_partition(point_mass(2, 3), partition)
        np.testing.assert_allclose(result.projection.probs, [0, 0, 0.5, 0.5])
        assert result.divergence == pytest.approx(1.0, abs=1e-12)

    def test_partial_partition(self) -> None:
        partition = Partition(2, ((0, 1),), covers=False)
        assert project_partition(uniform(2), partition).divergence == math.inf
        result = project_partition(point_mass(2, 0), partition)
        assert result.divergence == pytest.approx(1.0, abs=1e-12)

    def test_mixture_of_products_is_fixed(self) -> None:
        partition = balanced_cubical_partition(4, 3)
        p = densify(random_mixture(partition, seed=8))
        result = project_disjoint_mixture(p, partition)
        assert result.divergence == pytest.approx(0.0, abs=1e-10)
        assert result.projection.allclose(p, atol=1e-12)

    def test_mixture_never_worse_than_partition_model(self) -> None:
        partition = balanced_cubical_partition(4, 4)
        p = random_distribution(4, seed=11)
        coarse = project_partition(p, partition).divergence
        assert project_disjoint_mixture(p, partition).divergence <= coarse + 1e-12

    def test_dispatch(self) -> None:
        p = random_distribution(3, seed=2)
        partition = balanced_cubical_partition(3, 2)
        assert project(p, PartitionModel(partition)).divergence == pytest.approx(
            project_partition(p, partition).divergence
        )
        assert project(p, Independence.full(3)).divergence == pytest.approx(
            multiinformation(p)
        )

    def test_mixture_model_needs_faces(self) -> None:
        with pytest.raises(ValidationError):
            DisjointProductMixture(Partition(2, ((0, 3), (1, 2))))

    def test_to_dict_writes_infinity_as_text(self) -> None:
        partition = Partition(2, ((0, 1),), covers=False)
        assert project_partition(uniform(2), partition).to_dict()["divergence_bits"] == "inf"


SINGLETONS = Partition(2, ((0,), (1,), (2,), (3,)))

MODELS: list[ModelClass] = [
    Independence.full(3),
    Independence(Face.from_pattern("*1**")),
    PartitionModel(balanced_cubical_partition(3, 3)),
    PartitionModel(Partition(3, ((0,), (1, 2, 3, 4, 5, 6, 7)))),
    DisjointProductMixture(balanced_cubical_partition(4, 3)),
    DisjointProductMixture(SINGLETONS),
]


class TestMaxDivergence:
    def test_values(self) -> None:
        assert max_divergence(Independence.full(3)).value == 2.0
        assert max_divergence(PartitionModel(balanced_cubical_partition(3, 3))).value == 2.0
        assert max_divergence(DisjointProductMixture(balanced_cubical_partition(4, 3))).value == 2.0
        assert max_divergence(DisjointProductMixture(SINGLETONS)).value == 0.0

    def test_partial_partition_is_unbounded(self) -> None:
        partition = Partition(2, ((0, 1),), covers=False)
        assert max_divergence(PartitionModel(partition)).value == math.inf

    @pytest.mark.parametrize("model", MODELS)
    def test_witness_attains_value(self, model: ModelClass) -> None:
        result = max_divergence(model)
        assert project(result.witness, model).divergence == pytest.approx(result.value, abs=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    def test_random_distributions_stay_below(self, model: ModelClass) -> None:
        bound = max_divergence(model).value
        n = bound_dimension(model)
        for seed in range(20):
            p = random_distribution(n, seed=seed)
            if isinstance(model, Independence):
                p = restrict(p, model.support)
            assert project(p, model).divergence <= bound + 1e-12


def bound_dimension(model: ModelClass) -> int:
    match model:
        case Independence(support=face):
            return face.n
        case PartitionModel(partition=partition) | DisjointProductMixture(partition=partition):
            return partition.n


class TestBestPartition:
    def test_ties_keep_the_whole_cube(self) -> None:
        partition, result = best_partition_projection(half_pair(2, 0, 3), max_blocks=2)
        assert partition.blocks == ((0, 1, 2, 3),)
        assert result.divergence == pytest.approx(1.0, abs=1e-12)

    def test_singletons_are_exact(self) -> None:
        partition, result = best_partition_projection(half_pair(2, 0, 3), max_blocks=4)
        assert result.divergence == 0.0
        assert partition.sizes == (1, 1, 1, 1)

    def test_mixture_search(self) -> None:
        partition, result = best_partition_projection(half_pair(2, 0, 3), 2, model="mixture")
        assert result.divergence == 0.0
        assert partition.blocks == ((0, 2), (1, 3))


def product_rows(face: Face, theta: np.ndarray) -> np.ndarray:
    """Dense probabilities of the products on ``face``, one per row of ``theta``."""
    indices = face.indices()
    free = state_matrix(face.n)[indices][:, list(face.free_coordinates)]
    rows = np.zeros((len(theta), 1 << face.n))
    rows[:, indices] = np.exp(np.log(theta) @ free.T + np.log1p(-theta) @ (1 - free).T)
    return rows


def marginals(p: Distribution, face: Face) -> np.ndarray:
    return np.clip(p.probs @ state_matrix(p.n)[:, list(face.free_coordinates)], 0.0, 1.0)


def sample_theta(rng: np.random.Generator, center: np.ndarray, count: int) -> np.ndarray:
    spread = rng.uniform(size=(count // 2, len(center)))
    nearby = center + rng.normal(scale=0.05, size=(count - count // 2, len(center)))
    return np.clip(np.vstack([spread, nearby]), 1e-9, 1 - 1e-9)


def sample_weights(rng: np.random.Generator, center: np.ndarray, count: int) -> np.ndarray:
    spread = rng.dirichlet(np.ones(len(center)), size=count // 2)
    nearby = center + rng.normal(scale=0.05, size=(count - count // 2, len(center)))
    nearby = np.clip(nearby, 1e-12, None)
    return np.vstack([spread, nearby / nearby.sum(axis=1, keepdims=True)])


def candidates(
    p: Distribution, model: ModelClass, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Random members of ``model``, half spread out and half near the closed-form fit."""
    match model:
        case Independence(support=face):
            return product_rows(face, sample_theta(rng, marginals(p, face), count))
        case PartitionModel(partition=partition):
            masses = np.array([p.mass(block) for block in partition.blocks])
            weights = sample_weights(rng, masses, count)
            rows = np.zeros((count, 1 << p.n))
            for i, block in enumerate(partition.blocks):
                rows[:, list(block)] = weights[:, [i]] / len(block)
            return rows
        case DisjointProductMixture(partition=partition):
            items = block_conditionals(p, partition)
            weights = sample_weights(rng, np.array([item.mass for item in items]), count)
            rows = np.zeros((count, 1 << p.n))
            for i, (face, item) in enumerate(zip(partition.cubical_faces(), items)):
                theta = sample_theta(rng, marginals(item.conditional, face), count)
                rows += weights[:, [i]] * product_rows(face, theta)
            return rows


def check_projections_are_optimal(seed: int, count: int) -> None:
    rng = np.random.default_rng(seed)
    n = 1 + seed % 4
    p = random_distribution(n, seed=seed)
    partition = random_cubical_partition(n, int(rng.integers(1, (1 << n) + 1)), seed=seed)
    models: list[ModelClass] = [
        Independence.full(n),
        PartitionModel(partition),
        DisjointProductMixture(partition),
    ]
    for model in models:
        divergence = project(p, model).divergence
        others = rel_entr(p.probs, candidates(p, model, rng, count)).sum(axis=1) / LN2
        assert others.min() >= divergence - 1e-9


class TestProjectionOptimality:
    @pytest.mark.parametrize("seed", range(12))
    def test_random_members_never_win(self, seed: int) -> None:
        check_projections_are_optimal(seed, 2000)

    @pytest.mark.slow
    def test_random_members_never_win_at_scale(self) -> None:
        for seed in range(1000):
            check_projections_are_optimal(seed, 10_000)


class TestDecomposition:
    @pytest.mark.parametrize("seed", range(20))
    def test_mixture_divergence_splits_over_blocks(self, seed: int) -> None:
        n = 2 + seed % 3
        p = random_distribution(n, seed=seed)
        partition = random_cubical_partition(n, 1 + seed % (1 << n), seed=seed)
        pieces = math.fsum(
            item.mass
            * kl(
                item.conditional,
                densify(ProductDistribution(face, tuple(marginals(item.conditional, face)))),
            )
            for face, item in zip(partition.cubical_faces(), block_conditionals(p, partition))
        )
        direct = project_disjoint_mixture(p, partition).divergence
        assert direct == pytest.approx(pieces, abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_partition_divergence_splits_over_blocks(self, seed: int) -> None:
        n = 2 + seed % 3
        p = random_distribution(n, seed=seed)
        partition = random_cubical_partition(n, 1 + seed % (1 << n), seed=seed)
        pieces = math.fsum(
            item.mass * kl(item.conditional, restrict(uniform(n), block))
            for block, item in zip(partition.blocks, block_conditionals(p, partition))
        )
        assert project_partition(p, partition).divergence == pytest.approx(pieces, abs=1e-12)


def random_refinements(n: int, rng: np.random.Generator) -> list[Partition]:
    """A chain from the whole cube down to singletons, one random block split per step."""
    blocks = [list(range(1 << n))]
    chain = [Partition(n, (tuple(blocks[0]),))]
    while any(len(block) > 1 for block in blocks):
        splittable = [i for i, block in enumerate(blocks) if len(block) > 1]
        block = list(rng.permutation(blocks.pop(int(rng.choice(splittable)))))
        cut = int(rng.integers(1, len(block)))
        blocks.extend([block[:cut], block[cut:]])
        chain.append(Partition(n, tuple(tuple(int(x) for x in b) for b in blocks)))
    return chain


def face_refinements(n: int, rng: np.random.Generator) -> list[Partition]:
    faces = [Face.full(n)]
    chain = [Partition.from_faces(n, faces)]
    while any(face.dimension for face in faces):
        splittable = [i for i, face in enumerate(faces) if face.dimension]
        face = faces.pop(int(rng.choice(splittable)))
        faces.extend(face.split(int(rng.choice(face.free_coordinates))))
        chain.append(Partition.from_faces(n, faces))
    return chain


class TestRefinement:
    @pytest.mark.parametrize("seed", range(10))
    def test_partition_divergence_never_grows(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        n = 2 + seed % 3
        p = random_distribution(n, seed=seed)
        values = [project_partition(p, q).divergence for q in random_refinements(n, rng)]
        assert all(later <= earlier + 1e-12 for earlier, later in itertools.pairwise(values))
        assert values[-1] < 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_face_splits_never_hurt(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        n = 2 + seed % 3
        p = random_distribution(n, seed=seed)
        chain = face_refinements(n, rng)
        for projector in (project_partition, project_disjoint_mixture):
            values = [projector(p, q).divergence for q in chain]
            assert all(later <= earlier + 1e-12 for earlier, later in itertools.pairwise(values))
