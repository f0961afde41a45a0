from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any
from typing import Self

import numpy as np
from scipy.special import expit
from scipy.special import logit
from scipy.special import logsumexp

from rbmscope.distributions import Distribution
from rbmscope.distributions import ProductDistribution
from rbmscope.exceptions import DimensionError
from rbmscope.exceptions import ValidationError
from rbmscope.projections import kl
from rbmscope.statespace import FloatArray
from rbmscope.statespace import Seed
from rbmscope.statespace import check_dimension
from rbmscope.statespace import state_matrix

logger = logging.getLogger(__name__)

MAX_HIDDEN_UNITS = 25


def _frozen(values: Any, shape: tuple[int, ...], what: str) -> FloatArray:
    array = np.array(values, dtype=np.float64).reshape(shape)
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{what} must be finite.")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RbmParams:
    """W (m x n), B (n) and C (m) of an RBM with n visible and m hidden units."""

    weights: FloatArray
    visible_bias: FloatArray
    hidden_bias: FloatArray

    def __post_init__(self) -> None:
        visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        if visible_bias.ndim != 1 or hidden_bias.ndim != 1:
            raise ValidationError("Biases must be vectors.")
        n, m = len(visible_bias), len(hidden_bias)
        check_dimension(n)
        if m > MAX_HIDDEN_UNITS:
            raise DimensionError("m", m, MAX_HIDDEN_UNITS)
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.size != m * n:
            raise ValidationError(f"Weights of shape {weights.shape} do not fit m = {m}, n = {n}.")
        object.__setattr__(self, "weights", _frozen(weights, (m, n), "Weights"))
        object.__setattr__(self, "visible_bias", _frozen(visible_bias, (n,), "Visible biases"))
        object.__setattr__(self, "hidden_bias", _frozen(hidden_bias, (m,), "Hidden biases"))

    @classmethod
    def zeros(cls, n: int, m: int = 0) -> Self:
        return cls(np.zeros((m, n)), np.zeros(n), np.zeros(m))

    @classmethod
    def for_product(cls, product: ProductDistribution, cap: float) -> Self:
        """The m = 0 machine of a product: logit biases clipped to [-cap, cap].

        Fixed coordinates of the support get the bias +-cap towards their value.
        """
        face = product.support
        bias = np.where(np.array([face.anchor >> i & 1 for i in range(face.n)]) == 1, cap, -cap)
        if face.dimension:
            bias[list(face.free_coordinates)] = np.clip(logit(np.array(product.theta)), -cap, cap)
        return cls.zeros(face.n).with_visible_bias(bias)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            n, m = int(data["n"]), int(data["m"])
            weights = np.asarray(data["W"], dtype=np.float64).reshape(m, n)
            visible_bias = np.asarray(data["B"], dtype=np.float64)
            hidden_bias = np.asarray(data["C"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed RBM description: {e}.") from e
        return cls(weights, visible_bias, hidden_bias)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "W": self.weights.tolist(),
            "B": self.visible_bias.tolist(),
            "C": self.hidden_bias.tolist(),
        }

    @property
    def n(self) -> int:
        return len(self.visible_bias)

    @property
    def m(self) -> int:
        return len(self.hidden_bias)

    def with_visible_bias(self, visible_bias: FloatArray) -> RbmParams:
        return RbmParams(self.weights, visible_bias, self.hidden_bias)

    def with_hidden_unit(self, weights: FloatArray, bias: float) -> RbmParams:
        return RbmParams(
            np.vstack([self.weights, np.reshape(weights, (1, self.n))]),
            self.visible_bias,
            np.append(self.hidden_bias, bias),
        )

    def ascend(self, gradient: RbmGradient, learning_rate: float) -> RbmParams:
        return RbmParams(
            self.weights + learning_rate * gradient.weights,
            self.visible_bias + learning_rate * gradient.visible_bias,
            self.hidden_bias + learning_rate * gradient.hidden_bias,
        )

    def allclose(self, other: RbmParams, atol: float = 0.0) -> bool:
        return (
            self.weights.shape == other.weights.shape
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
            and np.allclose(self.visible_bias, other.visible_bias, rtol=0, atol=atol)
            and np.allclose(self.hidden_bias, other.hidden_bias, rtol=0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class RbmGradient:
    weights: FloatArray
    visible_bias: FloatArray
    hidden_bias: FloatArray

    @property
    def max_norm(self) -> float:
        parts = (self.weights.ravel(), self.visible_bias, self.hidden_bias)
        return float(max((np.max(np.abs(part)) for part in parts if part.size), default=0.0))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 500
    cd_steps: int = 1
    init_range: float = 10.0
    seed: int = 0
    cd_batch: int = 64
    finite_data: bool = False

    def __post_init__(self) -> None:
        # zero is allowed: a control run that leaves the parameters untouched
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ValidationError(f"Learning rate must be non-negative, got {self.learning_rate}.")
        if self.epochs < 0:
            raise ValidationError(f"Epoch count must be non-negative, got {self.epochs}.")
        if self.cd_steps < 1:
            raise ValidationError(f"CD needs at least one Gibbs step, got {self.cd_steps}.")
        if not self.init_range > 0:
            raise ValidationError(f"Init range must be positive, got {self.init_range}.")
        if self.cd_batch < 1:
            raise ValidationError(f"CD batch must be positive, got {self.cd_batch}.")


@dataclass(frozen=True, eq=False)
class TrainResult:
    params: RbmParams
    trajectory: tuple[float, ...]

    @property
    def final_kl(self) -> float:
        return self.trajectory[-1]

    @property
    def best_kl(self) -> float:
        return min(self.trajectory)


def _hidden_inputs(params: RbmParams, states: FloatArray) -> FloatArray:
    # one product per unit, so a unit's column never depends on its position
    result = np.empty((len(states), params.m))
    for j in range(params.m):
        result[:, j] = states @ params.weights[j] + params.hidden_bias[j]
    return result


def log_visible_distribution(params: RbmParams) -> FloatArray:
    """Normalized natural-log probabilities of every visible state, hidden units summed out."""
    states = state_matrix(params.n)
    softplus = np.logaddexp(0.0, _hidden_inputs(params, states))
    # sorted so the sum is exactly invariant under hidden unit permutations
    free = states @ params.visible_bias + np.sort(softplus, axis=1).sum(axis=1)
    result: FloatArray = free - logsumexp(free)
    return result


def visible_distribution(params: RbmParams) -> Distribution:
    return Distribution.normalized(params.n, np.exp(log_visible_distribution(params)))


def conditional_hidden(params: RbmParams, visible: FloatArray) -> FloatArray:
    result: FloatArray = expit(visible @ params.weights.T + params.hidden_bias)
    return result


def conditional_visible(params: RbmParams, hidden: FloatArray) -> FloatArray:
    result: FloatArray = expit(hidden @ params.weights + params.visible_bias)
    return result


def log_likelihood(params: RbmParams, target: Distribution) -> float:
    """Expected log-probability of the model under ``target``, in nats."""
    if target.n != params.n:
        raise ValidationError(f"Target lives in n = {target.n}, machine in n = {params.n}.")
    support = target.probs > 0
    return math.fsum(target.probs[support] * log_visible_distribution(params)[support])


def ml_gradient(params: RbmParams, target: Distribution) -> RbmGradient:
    """Exact gradient of the log-likelihood (nats) over full enumeration of the visible states."""
    if target.n != params.n:
        raise ValidationError(f"Target lives in n = {target.n}, machine in n = {params.n}.")
    states = state_matrix(params.n)
    hidden = expit(_hidden_inputs(params, states))
    difference = target.probs - np.exp(log_visible_distribution(params))
    return RbmGradient(
        (hidden * difference[:, None]).T @ states,
        difference @ states,
        difference @ hidden,
    )


def train_ml(params: RbmParams, target: Distribution, config: TrainConfig) -> TrainResult:
    """Fixed-step exact gradient ascent; the trajectory holds KL(target || model) per epoch."""
    trajectory = [kl(target, visible_distribution(params))]
    for _ in range(config.epochs):
        params = params.ascend(ml_gradient(params, target), config.learning_rate)
        trajectory.append(kl(target, visible_distribution(params)))
    logger.debug(
        "ML ascent n=%d m=%d: KL %.6g -> %.6g bits",
        params.n,
        params.m,
        trajectory[0],
        trajectory[-1],
    )
    return TrainResult(params, tuple(trajectory))


def _sample(rng: np.random.Generator, probabilities: FloatArray) -> FloatArray:
    return (rng.random(probabilities.shape) < probabilities).astype(np.float64)


def _training_batch(
    data: Distribution | FloatArray, config: TrainConfig, n: int
) -> FloatArray | None:
    """A fixed batch for finite data, None when every epoch draws afresh from the target."""
    if isinstance(data, Distribution):
        if data.n != n:
            raise ValidationError(f"Target lives in n = {data.n}, machine in n = {n}.")
        if config.finite_data:
            return state_matrix(n)[data.support()]
        return None
    samples = np.asarray(data, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != n or not len(samples):
        raise ValidationError(f"Samples must be a nonempty array of shape (N, {n}).")
    if not np.all((samples == 0) | (samples == 1)):
        raise ValidationError("Samples must be 0/1 vectors.")
    return samples


def train_cd(
    params: RbmParams, data: Distribution | FloatArray, config: TrainConfig
) -> RbmParams:
    """CD-k with one full-batch update per epoch.

    ``data`` is either a target distribution, sampled afresh every epoch unless
    ``config.finite_data`` asks for its support list, or an (N, n) array of
    0/1 training vectors.
    """
    rng = np.random.default_rng(config.seed)
    batch = _training_batch(data, config, params.n)
    states = state_matrix(params.n)
    for _ in range(config.epochs):
        if batch is None:
            assert isinstance(data, Distribution)
            visible = states[rng.choice(len(states), size=config.cd_batch, p=data.probs)]
        else:
            visible = batch
        positive = conditional_hidden(params, visible)
        negative_visible, negative = visible, positive
        for _ in range(config.cd_steps):
            hidden = _sample(rng, negative)
            negative_visible = _sample(rng, conditional_visible(params, hidden))
            negative = conditional_hidden(params, negative_visible)
        size = len(visible)
        gradient = RbmGradient(
            (positive.T @ visible - negative.T @ negative_visible) / size,
            (visible - negative_visible).sum(axis=0) / size,
            (positive - negative).sum(axis=0) / size,
        )
        params = params.ascend(gradient, config.learning_rate)
    return params


def random_init(n: int, m: int, init_range: float = 10.0, seed: Seed = None) -> RbmParams:
    if not init_range > 0:
        raise ValidationError(f"Init range must be positive, got {init_range}.")
    rng = np.random.default_rng(seed)
    return RbmParams(
        rng.uniform(-init_range, init_range, size=(m, n)),
        rng.uniform(-init_range, init_range, size=n),
        rng.uniform(-init_range, init_range, size=m),
    )
