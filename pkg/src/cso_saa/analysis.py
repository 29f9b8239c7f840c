"""Closed-form bound calculators and empirical growth probes.

Every calculator evaluates a printed formula; unspecified absolute constants
default to 1 and are configurable, so outputs are study aids "up to absolute
constants", not certified guarantees.  erf/erfc come from the platform libm
(double precision, correctly rounded to ~1 ulp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .saa import SaaObjective

# Sampling regimes: "cond_*" nests a fresh inner block per outer record
# (budget n*m + n); "indep_*" shares one inner block (budget n + m).
COND_LIPSCHITZ = "cond_lipschitz"
COND_SMOOTH = "cond_smooth"
COND_HEB = "cond_heb"
COND_HEB_SMOOTH = "cond_heb_smooth"
INDEP_LIPSCHITZ = "indep_lipschitz"
INDEP_HEB = "indep_heb"
REGIMES = (COND_LIPSCHITZ, COND_SMOOTH, COND_HEB, COND_HEB_SMOOTH,
           INDEP_LIPSCHITZ, INDEP_HEB)


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    """Constants and targets feeding the sample-size calculators.

    ``accuracy`` is the target optimality gap; ``confidence_slack`` the
    allowed failure probability.  ``growth_rate``/``growth_exponent`` are the
    error-bound parameters required by the *_heb regimes.  ``abs_constant``
    replaces every unspecified O(1) factor.
    """

    regime: str
    accuracy: float
    confidence_slack: float
    outer_lipschitz: float = 1.0
    inner_lipschitz: float = 1.0
    outer_smoothness: Optional[float] = None
    outer_bound: Optional[float] = None
    inner_bound: Optional[float] = None
    outer_variance: Optional[float] = None
    inner_variance: float = 1.0
    diameter: Optional[float] = None
    dimension: Optional[int] = None
    inner_dimension: int = 1
    growth_rate: Optional[float] = None
    growth_exponent: Optional[float] = None
    abs_constant: float = 1.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise AnalysisError(f"unknown regime: {self.regime!r}")
        if self.accuracy <= 0:
            raise AnalysisError(f"accuracy must be positive, got {self.accuracy}")
        if not 0 < self.confidence_slack < 1:
            raise AnalysisError(
                f"confidence slack must lie in (0,1), got {self.confidence_slack}")

    @classmethod
    def from_json(cls, obj: dict) -> "BoundInputs":
        return cls(**obj)


def _require(inputs: BoundInputs, *names: str):
    missing = [n for n in names if getattr(inputs, n) is None]
    if missing:
        raise AnalysisError(
            f"regime {inputs.regime} needs {', '.join(missing)}")


@dataclass(frozen=True)
class SampleSizes:
    n_min: int
    m_min: int
    total: int

    def to_dict(self) -> dict:
        return {"n_min": self.n_min, "m_min": self.m_min, "total": self.total}


def sample_complexity(inputs: BoundInputs) -> SampleSizes:
    """Minimal (n, m) for an accuracy/confidence target in the given regime.

    Ceilings of the printed lower bounds; log factors included; every
    unspecified absolute constant is ``abs_constant``.
    """
    eps = inputs.accuracy
    alpha = inputs.confidence_slack
    L_out, L_in = inputs.outer_lipschitz, inputs.inner_lipschitz
    var_in = inputs.inner_variance
    C = inputs.abs_constant
    regime = inputs.regime

    def ball_log() -> float:
        _require(inputs, "diameter", "dimension")
        return (inputs.dimension * math.log(8.0 * L_out * L_in * inputs.diameter / eps)
                + math.log(1.0 / alpha))

    def heb_n() -> float:
        _require(inputs, "growth_rate", "growth_exponent")
        delta = inputs.growth_exponent
        return (2.0 * L_out * L_in) ** (delta + 1.0) / (
            inputs.growth_rate * (alpha * eps) ** delta)

    def smooth_m(scale: float) -> float:
        _require(inputs, "outer_smoothness")
        return 2.0 * inputs.outer_smoothness * var_in / scale

    if regime == COND_LIPSCHITZ or regime == COND_SMOOTH:
        _require(inputs, "outer_variance", "outer_bound")
        noise = (inputs.outer_variance
                 + 4.0 * inputs.outer_bound * L_out * math.sqrt(var_in))
        n = C * noise / eps**2 * ball_log()
        m = L_out**2 * var_in / eps**2 if regime == COND_LIPSCHITZ else smooth_m(eps)
    elif regime == COND_HEB:
        n = heb_n()
        m = 16.0 * L_out**2 * var_in / (alpha**2 * eps**2)
    elif regime == COND_HEB_SMOOTH:
        n = heb_n()
        m = smooth_m(alpha * eps)
    elif regime == INDEP_LIPSCHITZ:
        _require(inputs, "outer_variance")
        log_term = ball_log()
        n = C * inputs.outer_variance / eps**2 * log_term
        n_int = max(1, math.ceil(n))
        m = (C * L_out**2 * var_in / eps**2
             * (log_term + math.log(n_int * inputs.inner_dimension)))
    else:  # INDEP_HEB
        _require(inputs, "inner_bound", "diameter", "dimension")
        n = heb_n()
        m = max(
            (12.0 * L_out * math.sqrt(var_in) / (alpha * eps)) ** 2,
            C * (6.0 * L_out * inputs.inner_bound / (alpha * eps)) ** 2
            * inputs.dimension
            * math.log(12.0 * inputs.diameter * L_out * L_in / (alpha * eps)),
        )

    n_min = max(1, math.ceil(n))
    m_min = max(1, math.ceil(m))
    if regime.startswith("cond"):
        total = n_min * m_min + n_min
    else:
        total = n_min + m_min
    return SampleSizes(n_min=n_min, m_min=m_min, total=total)


@dataclass(frozen=True)
class ErrorBounds:
    bias_bound: float
    var_bound: float
    mse_bound: float

    def to_dict(self) -> dict:
        return {"bias_bound": self.bias_bound, "var_bound": self.var_bound,
                "mse_bound": self.mse_bound}


def bias_variance_bounds(inputs: BoundInputs, n: int, m: int, smooth: bool) -> ErrorBounds:
    """Pointwise estimation-error envelopes for the nested empirical average:

        bias <= L sigma_in / sqrt(m)        (Lipschitz outer cost)
        bias <= S sigma_in^2 / (2 m)        (smooth outer cost)
        var  <= sigma_out^2 / n + 4 M L sigma_in / (n sqrt(m))
        mse  <= bias^2 + var
    """
    _require(inputs, "outer_variance", "outer_bound")
    sigma_in = math.sqrt(inputs.inner_variance)
    if smooth:
        _require(inputs, "outer_smoothness")
        bias = inputs.outer_smoothness * inputs.inner_variance / (2.0 * m)
    else:
        bias = inputs.outer_lipschitz * sigma_in / math.sqrt(m)
    var = (inputs.outer_variance / n
           + 4.0 * inputs.outer_bound * inputs.outer_lipschitz * sigma_in
           / (n * math.sqrt(m)))
    return ErrorBounds(bias_bound=bias, var_bound=var, mse_bound=bias**2 + var)


# ---------------------------------------------------------------------------
# Large-deviation tails
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubGaussian:
    """exp(-n eps^2 / (2 sigma^2)); valid for all eps > 0."""


@dataclass(frozen=True)
class RateFunction:
    """exp(-n eps^2 / ((2 + slack) sigma^2)); valid for small enough eps
    (the quadratic expansion of the rate function near 0)."""

    slack: float = 1.0


@dataclass(frozen=True)
class VectorBound:
    """min(1, 2k exp(-n eps^2 / ((2 + slack) sigma^2))) for k-dimensional
    averages with second-moment sigma^2."""

    k: int = 1
    slack: float = 1.0


TailVariant = Union[SubGaussian, RateFunction, VectorBound]


def large_deviation_bound(n: int, eps: float, sigma2: float,
                          variant: TailVariant = SubGaussian()) -> float:
    """Tail probability bound for a mean of n zero-mean samples exceeding eps."""
    if n <= 0 or sigma2 <= 0:
        raise AnalysisError(f"need n > 0 and sigma2 > 0, got n={n}, sigma2={sigma2}")
    if eps < 0:
        raise AnalysisError(f"eps must be >= 0, got {eps}")
    if isinstance(variant, SubGaussian):
        raw = math.exp(-n * eps**2 / (2.0 * sigma2))
    elif isinstance(variant, RateFunction):
        raw = math.exp(-n * eps**2 / ((2.0 + variant.slack) * sigma2))
    elif isinstance(variant, VectorBound):
        raw = 2.0 * variant.k * math.exp(-n * eps**2 / ((2.0 + variant.slack) * sigma2))
    else:
        raise AnalysisError(f"unknown tail variant: {variant!r}")
    return min(1.0, raw)


# ---------------------------------------------------------------------------
# One-dimensional shifted-noise error formula
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HuberErrorInterval:
    """Sandwich for the expected optimality gap of the one-dimensional
    shifted-noise instance: the true expectation lies in
    [main, main + remainder_bound]."""

    main: float
    remainder_bound: float

    def to_dict(self) -> dict:
        return {"main": self.main, "remainder_bound": self.remainder_bound}


def huber1d_expected_error(gamma: float, sigma_eta2: float, m: int) -> HuberErrorInterval:
    """Expected gap E F(-eta_bar) - F* for the shifted-noise instance.

        main = (sigma^2 / (2 gamma m)) erf(sqrt(gamma^2 m / (2 sigma^2))) + sigma^2/m
        remainder_bound = sqrt(sigma^2 / (2 pi m)) exp(-m gamma^2 / (2 sigma^2))

    At gamma = 0 both pieces are continuous limits: main = sqrt(sigma^2/(2 pi m))
    + sigma^2/m and remainder_bound = sqrt(sigma^2/(2 pi m)); there the true
    gap E|eta_bar| + E eta_bar^2 attains the upper endpoint exactly, so the
    remainder does not vanish.
    """
    if gamma < 0:
        raise AnalysisError(f"negative smoothing knee: {gamma}")
    if sigma_eta2 <= 0:
        raise AnalysisError(f"noise variance must be positive, got {sigma_eta2}")
    if m < 1:
        raise AnalysisError(f"inner sample count must be >= 1, got {m}")
    half_gauss = math.sqrt(sigma_eta2 / (2.0 * math.pi * m))
    if gamma == 0.0:
        return HuberErrorInterval(main=half_gauss + sigma_eta2 / m,
                                  remainder_bound=half_gauss)
    z = math.sqrt(gamma**2 * m / (2.0 * sigma_eta2))
    main = sigma_eta2 / (2.0 * gamma * m) * math.erf(z) + sigma_eta2 / m
    remainder = half_gauss * math.exp(-m * gamma**2 / (2.0 * sigma_eta2))
    return HuberErrorInterval(main=main, remainder_bound=remainder)


# ---------------------------------------------------------------------------
# Empirical quadratic-growth probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthProbeResult:
    mu_hat: float
    probes_used: int

    def to_dict(self) -> dict:
        return {"mu_hat": self.mu_hat, "probes_used": self.probes_used}


def qg_probe(obj: SaaObjective, x_hat: np.ndarray, probes: int, seed,
             min_distance: float = 1e-3) -> GrowthProbeResult:
    """Empirical quadratic-growth rate around a solver output:

        mu_hat = min over probe points x of (value(x) - value(x_hat)) / ||x - x_hat||^2,

    probing uniformly in the domain ball and discarding points within
    ``min_distance`` of x_hat (ratio stability).  mu_hat > 0 is evidence of
    quadratic growth; nonpositive values are reported, not errors.
    """
    if probes < 1:
        raise AnalysisError(f"need at least one probe, got {probes}")
    problem = obj.problem
    x_hat = problem.check_point(x_hat)
    rng = np.random.default_rng(seed)
    d = problem.dimension
    radius = problem.domain_radius
    f_hat = obj.value(x_hat)
    mu_hat = math.inf
    used = 0
    while used < probes:
        want = probes - used
        dirs = rng.standard_normal((want, d))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radii = radius * rng.random((want, 1)) ** (1.0 / d)
        points = dirs / norms * radii
        for point in points:
            gap = float(np.linalg.norm(point - x_hat))
            if gap < min_distance:
                continue
            ratio = (obj.value(point) - f_hat) / gap**2
            mu_hat = min(mu_hat, ratio)
            used += 1
    return GrowthProbeResult(mu_hat=mu_hat, probes_used=used)
