"""Budget allocation and dataset realization for the two sampling schemes.

A total sample budget ``T`` is split into ``n`` outer records and inner
records: the nested scheme draws a fresh inner block of size ``m`` per outer
record (``T = n*m + n``), while the shared scheme draws one inner block used
by every outer record (``T = n + m``); the latter is only legal when the
inner law does not depend on the outer record.

Seeding: every sampling entry point takes an explicit seed (int or
``numpy.random.SeedSequence``).  Experiment code derives per-task seeds as
``SeedSequence([master_seed, *path])`` so results are independent of thread
scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .problem import CsoProblem

CONDITIONAL = "conditional"
INDEPENDENT = "independent"
SCHEMES = (CONDITIONAL, INDEPENDENT)


class AllocationError(ValueError):
    """Raised when a budget cannot satisfy n >= 2, m >= 1."""


class SamplingError(ValueError):
    """Raised for scheme/instance mismatches or bad shapes."""


def derive_seed(master_seed: int, *path: int) -> np.random.SeedSequence:
    """Deterministic child seed for a task addressed by an integer path."""
    return np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])


def _as_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Allocation strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentStrategy:
    """Outer count n = floor(T**alpha), clamped to >= 2."""

    alpha: Fraction

    @property
    def label(self) -> str:
        return f"T^{self.alpha.numerator}/{self.alpha.denominator}"


@dataclass(frozen=True)
class FixedOuterStrategy:
    """Outer count pinned to an explicit n."""

    n: int

    @property
    def label(self) -> str:
        return f"n={self.n}"


Strategy = Union[ExponentStrategy, FixedOuterStrategy]

DEFAULT_EXPONENTS = tuple(
    ExponentStrategy(Fraction(p, q)) for p, q in ((1, 4), (1, 3), (1, 2), (2, 3))
)


def parse_strategy(text) -> Strategy:
    """Parse "1/2"-style exponents or {"n": 100} fixed-count strategies."""
    if isinstance(text, (ExponentStrategy, FixedOuterStrategy)):
        return text
    if isinstance(text, dict):
        if "n" in text:
            return FixedOuterStrategy(int(text["n"]))
        if "alpha" in text:
            return ExponentStrategy(_parse_fraction(text["alpha"]))
        raise AllocationError(f"bad strategy object: {text!r}")
    return ExponentStrategy(_parse_fraction(text))


def _parse_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        frac = value
    elif isinstance(value, str):
        frac = Fraction(value)
    elif isinstance(value, float):
        frac = Fraction(value).limit_denominator(1000)
    elif isinstance(value, int):
        frac = Fraction(value)
    else:
        raise AllocationError(f"cannot parse exponent: {value!r}")
    if not 0 < frac < 1:
        raise AllocationError(f"exponent must lie in (0, 1), got {frac}")
    return frac


def _floor_power(total: int, alpha: Fraction) -> int:
    """Exact floor(total**alpha) for rational alpha, via integer root finding."""
    p, q = alpha.numerator, alpha.denominator
    target = total**p
    x = int(round(total ** (p / q)))
    x = max(x, 1)
    while x**q > target:
        x -= 1
    while (x + 1) ** q <= target:
        x += 1
    return x


@dataclass(frozen=True)
class Allocation:
    """A realized budget split.  ``leftover`` is discarded budget (nested
    scheme only; the shared scheme always consumes the budget exactly)."""

    total: int
    scheme: str
    strategy_label: str
    n: int
    m: int
    leftover: int


def allocate(total: int, strategy: Strategy, scheme: str) -> Allocation:
    """Split a total budget into (n, m) for the given scheme.

    Nested scheme: m = floor((T - n)/n), leftover = T - n*m - n.
    Shared scheme: m = T - n, no leftover.
    """
    if scheme not in SCHEMES:
        raise SamplingError(f"unknown scheme: {scheme!r}")
    total = int(total)
    if total < 6:
        raise AllocationError(f"budget too small: {total} < 6")
    strategy = parse_strategy(strategy)
    if isinstance(strategy, ExponentStrategy):
        n = max(2, _floor_power(total, strategy.alpha))
    else:
        n = int(strategy.n)
        if n < 2:
            raise AllocationError(f"fixed outer count must be >= 2, got {n}")
    if scheme == CONDITIONAL:
        m = (total - n) // n
        leftover = total - n * m - n
    else:
        m = total - n
        leftover = 0
    if m < 1:
        raise AllocationError(
            f"budget {total} cannot supply n={n} outer and m>=1 inner samples")
    return Allocation(total=total, scheme=scheme, strategy_label=strategy.label,
                      n=n, m=m, leftover=leftover)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalDataset:
    """n outer records with a private inner block of m records each."""

    outer: np.ndarray   # (n, outer_width)
    inner: np.ndarray   # (n, m, inner_width)

    def __post_init__(self):
        if self.outer.ndim != 2 or self.inner.ndim != 3:
            raise SamplingError("conditional dataset needs outer (n,w), inner (n,m,q)")
        if self.inner.shape[0] != self.outer.shape[0]:
            raise SamplingError(
                f"row mismatch: {self.inner.shape[0]} inner rows for "
                f"{self.outer.shape[0]} outer records")

    @property
    def n(self) -> int:
        return self.outer.shape[0]

    @property
    def m(self) -> int:
        return self.inner.shape[1]


@dataclass(frozen=True)
class IndependentDataset:
    """n outer records sharing one inner block of m records."""

    outer: np.ndarray   # (n, outer_width)
    inner: np.ndarray   # (m, inner_width)

    def __post_init__(self):
        if self.outer.ndim != 2 or self.inner.ndim != 2:
            raise SamplingError("independent dataset needs outer (n,w), inner (m,q)")

    @property
    def n(self) -> int:
        return self.outer.shape[0]

    @property
    def m(self) -> int:
        return self.inner.shape[0]


Dataset = Union[ConditionalDataset, IndependentDataset]


def sample_conditional(problem: CsoProblem, n: int, m: int, seed) -> ConditionalDataset:
    """Draw n outer records and, for each, m inner records from its
    conditional law.  Deterministic in (problem, n, m, seed)."""
    if n < 1 or m < 1:
        raise SamplingError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    rng = _as_rng(seed)
    outer = problem.sample_outer(rng, n)
    inner = problem.sample_inner_given(rng, outer, m)
    return ConditionalDataset(outer=outer, inner=inner)


def sample_independent(problem: CsoProblem, n: int, m: int, seed) -> IndependentDataset:
    """Draw n outer records and one shared inner block of m marginal records.

    Rejected for instances whose inner law depends on the outer record.
    """
    if n < 1 or m < 1:
        raise SamplingError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if not problem.eta_independent or problem.sample_inner_marginal is None:
        raise SamplingError(
            f"{problem.label}: inner law depends on the outer record; "
            "shared inner blocks are not valid")
    rng = _as_rng(seed)
    outer = problem.sample_outer(rng, n)
    inner = problem.sample_inner_marginal(rng, m)
    return IndependentDataset(outer=outer, inner=inner)


def sample_dataset(problem: CsoProblem, scheme: str, n: int, m: int, seed) -> Dataset:
    if scheme == CONDITIONAL:
        return sample_conditional(problem, n, m, seed)
    if scheme == INDEPENDENT:
        return sample_independent(problem, n, m, seed)
    raise SamplingError(f"unknown scheme: {scheme!r}")
