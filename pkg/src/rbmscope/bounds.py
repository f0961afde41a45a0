from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import astuple
from dataclasses import dataclass
from fractions import Fraction

from rbmscope.exceptions import ValidationError

# All logarithms are base 2.
UPPER_ENVELOPE_GAP = -math.log2(math.log(2)) - (1 / math.log(2) - 1)

BOUND_COLUMNS = ("n", "m", "theorem2", "lower_envelope", "upper_envelope", "universal")


def _check_sizes(n: int, m: int) -> None:
    if n < 1:
        raise ValidationError(f"Visible count must be positive, got {n}.")
    if m < 0:
        raise ValidationError(f"Hidden count must be non-negative, got {m}.")


def _floor_log2(value: int) -> int:
    return value.bit_length() - 1


def universal_hidden_units(n: int) -> int:
    return (1 << (n - 1)) - 1


def is_universal(n: int, m: int) -> bool:
    _check_sizes(n, m)
    return m >= universal_hidden_units(n)


def theorem2_bound(n: int, m: int) -> float:
    """Worst-case divergence bound (bits) for n visible, m hidden units; 0 once universal."""
    if is_universal(n, m):
        return 0.0
    j = _floor_log2(m + 1)
    return float(n - j - Fraction(m + 1, 1 << j))


def partition_model_bound(n: int, m: int) -> float:
    _check_sizes(n, m)
    return float(max(n - _floor_log2(m + 1), 0))


def mixture_bound(n: int, m: int) -> float:
    _check_sizes(n, m)
    return float(max(n - 1 - _floor_log2(m + 1), 0))


def maxerrormix_bound(n: int, block_exponents: Sequence[int]) -> float:
    """Divergence bound of a disjoint product mixture on faces of dimensions ``block_exponents``."""
    if n < 1:
        raise ValidationError(f"Visible count must be positive, got {n}.")
    if any(not 0 <= exponent <= n for exponent in block_exponents):
        raise ValidationError(f"Block exponents must lie in [0, {n}].")
    if sum(1 << exponent for exponent in block_exponents) != 1 << n:
        raise ValidationError(f"Block exponents {list(block_exponents)} do not fill 2^{n} states.")
    total = sum(
        (Fraction(e - 1, 1 << (n - e)) for e in block_exponents if e > 1),
        Fraction(0),
    )
    return float(total)


def appendix_f(x: float) -> float:
    """log(x) + 1 - floor(log(x)) - x / 2^floor(log(x)); zero exactly at powers of two."""
    if not x > 0:
        raise ValidationError(f"Argument must be positive, got {x}.")
    floor_log = math.frexp(x)[1] - 1
    return math.log2(x) + 1 - floor_log - math.ldexp(x, -floor_log)


def appendix_c() -> float:
    return UPPER_ENVELOPE_GAP


def lower_envelope(n: int, m: int) -> float:
    _check_sizes(n, m)
    return (n - 1) - math.log2(m + 1)


def upper_envelope(n: int, m: int) -> float:
    return lower_envelope(n, m) + UPPER_ENVELOPE_GAP


def hidden_units_for_tolerance(n: int, epsilon: float) -> int:
    """Hidden units that bring the worst-case divergence down to ``epsilon * (n - 1)``."""
    if n < 1:
        raise ValidationError(f"Visible count must be positive, got {n}.")
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError(f"Tolerance must lie in [0, 1], got {epsilon}.")
    return max(0, math.ceil(2 ** ((n - 1) * (1 - epsilon) + 0.1) - 1))


@dataclass(frozen=True)
class DimensionReport:
    dim_mixture_class: int
    dim_rbm_param_upper: int
    gap: int


def dimension_report(n: int, m: int) -> DimensionReport:
    _check_sizes(n, m)
    if (m + 1) & m:
        raise ValidationError(f"m + 1 must be a power of two, got {m + 1}.")
    k = _floor_log2(m + 1)
    mixture = (m + 1) * n + (m + 1) + n - (m + 1) * k
    rbm = m * n + m + n
    return DimensionReport(mixture, rbm, mixture - rbm)


def reference_constants(n: int) -> tuple[int, int]:
    """(hidden units for universality, hidden units any universal RBM needs at least)."""
    if n < 1:
        raise ValidationError(f"Visible count must be positive, got {n}.")
    return universal_hidden_units(n), -(-(1 << n) // (n + 1)) - 1


@dataclass(frozen=True)
class BoundReport:
    n: int
    m: int
    theorem2: float
    lower_envelope: float
    upper_envelope: float
    universal: bool

    def as_row(self) -> tuple[int | float | bool, ...]:
        return astuple(self)


def bound_report(n: int, m: int) -> BoundReport:
    return BoundReport(
        n,
        m,
        theorem2_bound(n, m),
        lower_envelope(n, m),
        upper_envelope(n, m),
        is_universal(n, m),
    )


def bound_table(n: int, m_max: int) -> list[BoundReport]:
    if m_max < 0:
        raise ValidationError(f"m_max must be non-negative, got {m_max}.")
    return [bound_report(n, m) for m in range(m_max + 1)]
