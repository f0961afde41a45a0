from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.special import logit

from rbmscope.distributions import Distribution
from rbmscope.distributions import MixtureComponent
from rbmscope.distributions import MixtureOfProducts
from rbmscope.distributions import ProductDistribution
from rbmscope.exceptions import PreconditionError
from rbmscope.exceptions import SupportError
from rbmscope.exceptions import ValidationError
from rbmscope.rbm import RbmParams
from rbmscope.rbm import log_visible_distribution
from rbmscope.statespace import FloatArray
from rbmscope.statespace import Face
from rbmscope.statespace import is_edge
from rbmscope.statespace import state_matrix

logger = logging.getLogger(__name__)

DEFAULT_SHARPNESS = 30.0
PRODUCT_TOLERANCE = 1e-8
LOGIT_CAP = 500.0

type Edge = tuple[int, int]


@dataclass(frozen=True)
class AppendSpec:
    """One hidden unit to append: mix ``alpha`` of the product exp(beta . v_I) on ``face``."""

    face: Face
    beta: tuple[float, ...]
    alpha: float
    sharpness: float = DEFAULT_SHARPNESS

    def __post_init__(self) -> None:
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != self.face.dimension:
            raise ValidationError(
                f"Face {self.face} has {self.face.dimension} free coordinates,"
                f" got {len(beta)} natural parameters."
            )
        if not all(math.isfinite(b) for b in beta):
            raise ValidationError("Natural parameters must be finite.")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"Mixture weight must lie in [0, 1], got {self.alpha}.")
        if not self.sharpness > 0:
            raise ValidationError(f"Sharpness must be positive, got {self.sharpness}.")
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class RestrictionFit:
    log_k: float
    eta: FloatArray
    residual: float


def restriction_parameters(log_p: FloatArray, face: Face) -> RestrictionFit:
    """Least-squares fit of log p(v) = log K + eta . v_I over the states of ``face``."""
    indices = face.indices()
    free = state_matrix(face.n)[indices][:, list(face.free_coordinates)]
    design = np.hstack([np.ones((len(indices), 1)), free])
    values = log_p[indices]
    coefficients = np.linalg.lstsq(design, values, rcond=None)[0]
    residual = float(np.max(np.abs(design @ coefficients - values)))
    return RestrictionFit(float(coefficients[0]), coefficients[1:], residual)


def append_component(
    params: RbmParams, spec: AppendSpec, *, tolerance: float | None = PRODUCT_TOLERANCE
) -> RbmParams:
    """Add one hidden unit mixing ``spec.alpha`` of a product on ``spec.face`` into the model.

    As the sharpness grows the visible distribution tends to
    (1 - alpha) * p + alpha * p_hat, with p the current distribution and p_hat
    the product exp(beta . v_I) on the face. The current distribution
    restricted to the face must itself be a product; pass ``tolerance=None`` to
    skip that check.
    """
    face = spec.face
    if face.n != params.n:
        raise ValidationError(f"Face {face} does not live in the {params.n}-cube.")
    fit = restriction_parameters(log_visible_distribution(params), face)
    if tolerance is not None and fit.residual > tolerance:
        raise PreconditionError(
            f"Restriction to face {face} is not a product distribution"
            f" (residual {fit.residual:.3g}).",
            fit.residual,
        )
    beta = np.array(spec.beta)
    # u^{I,0} - 1^{I,0}/2: +-1/2 on the fixed coordinates, 0 on the free ones
    sign = np.zeros(params.n)
    for i in range(params.n):
        if face.fixed_mask >> i & 1:
            sign[i] = (face.anchor >> i & 1) - 0.5
    anchor = state_matrix(params.n)[face.anchor]
    weights = 2 * spec.sharpness * sign
    weights[list(face.free_coordinates)] = beta - fit.eta
    log_face_sum = float(np.sum(np.logaddexp(0.0, beta)))
    offset = float(np.clip(logit(spec.alpha), -LOGIT_CAP, LOGIT_CAP))
    bias = -2 * spec.sharpness * float(sign @ anchor) + offset - fit.log_k - log_face_sum
    return params.with_hidden_unit(weights, bias)


def product_rbm(product: ProductDistribution, sharpness: float = DEFAULT_SHARPNESS) -> RbmParams:
    return RbmParams.for_product(product, sharpness / 2)


def _natural_parameters(product: ProductDistribution, cap: float) -> tuple[float, ...]:
    return tuple(np.clip(logit(np.array(product.theta)), -cap, cap))


def _append_order(target: MixtureOfProducts, base: int) -> list[int]:
    rest = [i for i in range(len(target)) if i != base]
    return [base, *sorted(rest, key=lambda i: (-target.faces[i].dimension, i))]


def _check_disjoint(target: MixtureOfProducts, base: int) -> None:
    faces = [face for i, face in enumerate(target.faces) if i != base]
    for i, face in enumerate(faces):
        for other in faces[i + 1 :]:
            if not face.is_disjoint(other):
                raise ValidationError(f"Component supports {face} and {other} overlap.")


def build_mixture_rbm(
    target: MixtureOfProducts,
    base_index: int | None = None,
    sharpness: float = DEFAULT_SHARPNESS,
) -> RbmParams:
    """An RBM with len(target) - 1 hidden units approximating ``target``.

    The base component seeds an m = 0 machine with biases clipped to
    +-``sharpness`` / 2; every other component is appended as one hidden unit
    whose sharpness exceeds the log-depth of that machine by ``sharpness``.
    """
    if not sharpness > 0:
        raise ValidationError(f"Sharpness must be positive, got {sharpness}.")
    if base_index is None:
        base_index = target.base_index
    if base_index is None:
        base_index = max(range(len(target)), key=lambda i: (target.faces[i].dimension, -i))
    if not 0 <= base_index < len(target):
        raise ValidationError(f"Base index {base_index} out of range.")
    _check_disjoint(target, base_index)

    order = _append_order(target, base_index)
    base = target.components[base_index]
    # a lone product has nothing appended after it, so its fixed coordinates may saturate
    cap = sharpness / 2 if len(order) > 1 else LOGIT_CAP
    params = RbmParams.for_product(base.product, cap)
    # units only raise log-probabilities, so no state ever sits deeper than under the base
    unit_sharpness = sharpness + float(np.sum(np.abs(params.visible_bias)))
    max_step = float(expit(sharpness / 2))
    cumulative = base.weight
    for index in order[1:]:
        component = target.components[index]
        cumulative += component.weight
        step = min(component.weight / cumulative, max_step) if cumulative > 0 else 0.0
        spec = AppendSpec(
            component.product.support,
            _natural_parameters(component.product, sharpness / 2),
            step,
            unit_sharpness,
        )
        # supports are disjoint faces; finite-a contamination would trip the numeric check
        params = append_component(params, spec, tolerance=None)
    logger.info(
        "Built RBM with %d hidden units for a %d-component mixture (a = %g)",
        params.m,
        len(target),
        sharpness,
    )
    return params


def find_edge_cover(support: Iterable[int]) -> list[Edge]:
    """Greedy disjoint edges covering ``support``; unmatched states become (x, x)."""
    states = sorted(set(int(x) for x in support))
    matched: set[int] = set()
    cover: list[Edge] = []
    for x in states:
        if x in matched:
            continue
        partner = next((y for y in states if y not in matched and is_edge(x, y)), x)
        matched.update((x, partner))
        cover.append((min(x, partner), max(x, partner)))
    return cover


def _edge_component(target: Distribution, edge: Edge) -> MixtureComponent:
    x, y = edge
    face = Face.spanned(target.n, (x, y))
    weight = target.mass({x, y})
    if face.dimension == 0:
        return MixtureComponent(weight, ProductDistribution(face, ()))
    # the state of the edge with the free coordinate set is the larger index
    theta = target[max(x, y)] / weight if weight > 0 else 0.5
    return MixtureComponent(weight, ProductDistribution(face, (theta,)))


def build_support_cover_rbm(
    target: Distribution,
    cover: Sequence[Edge] | None = None,
    sharpness: float = DEFAULT_SHARPNESS,
) -> RbmParams:
    """An RBM with len(cover) - 1 hidden units approximating ``target``.

    Every edge of ``cover`` carries the conditional of ``target`` on it; without a
    cover one is found greedily.
    """
    if cover is None:
        cover = find_edge_cover(int(x) for x in target.support())
    covered: set[int] = set()
    for x, y in cover:
        if not (0 <= x < len(target) and 0 <= y < len(target)):
            raise ValidationError(f"Edge ({x}, {y}) leaves the {target.n}-cube.")
        if x != y and not is_edge(x, y):
            raise ValidationError(f"States {x} and {y} do not form an edge.")
        if not covered.isdisjoint({x, y}):
            raise ValidationError(f"Edge ({x}, {y}) overlaps another edge of the cover.")
        covered.update((x, y))
    if missing := set(int(x) for x in target.support()) - covered:
        raise SupportError(f"Cover misses support states {sorted(missing)}.")
    components = [_edge_component(target, edge) for edge in cover]
    total = math.fsum(component.weight for component in components)
    components = [MixtureComponent(c.weight / total, c.product) for c in components]
    return build_mixture_rbm(MixtureOfProducts(tuple(components)), sharpness=sharpness)
