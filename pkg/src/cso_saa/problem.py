"""Nested-expectation problem instances and their ground-truth oracles.

A problem is a pair of random cost functions arranged as

    F(x) = E_xi[ f(E_[eta|xi][ g(x, xi, eta) ], xi) ],

where ``x`` is a decision vector constrained to a Euclidean ball, ``xi`` is an
outer random record, and ``eta`` is an inner random record whose law may
depend on ``xi``.  Only sample access to both laws is assumed by downstream
code; the built-in instances additionally expose exact conditional means and
deterministic value oracles so that estimation error can be measured against
the truth.

All evaluation callables are numpy-vectorized over leading batch dimensions:
``outer_eval(u, xi)`` maps ``(..., k), (..., w) -> (...,)`` and
``inner_eval(x, xi, eta)`` maps ``(d,), (..., w), (..., q) -> (..., k)``.
Problems are immutable; samplers take an explicit ``numpy.random.Generator``
so all randomness is owned by the caller.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad

Array = np.ndarray

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ProblemError(ValueError):
    """Raised for invalid instance parameters or oracle requests."""


# ---------------------------------------------------------------------------
# Huber smoothing
# ---------------------------------------------------------------------------

def huber(u, gamma: float):
    """Huber value: ``u**2 / (2*gamma)`` for ``|u| <= gamma``, else ``|u| - gamma/2``.

    ``gamma == 0`` degenerates to ``|u|``.  Vectorized; rejects negative gamma.
    """
    if gamma < 0:
        raise ProblemError(f"negative Huber knee: {gamma}")
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    if gamma == 0.0:
        out = au
    else:
        out = np.where(au <= gamma, u * u / (2.0 * gamma), au - 0.5 * gamma)
    return out if out.ndim else float(out)


def huber_grad(u, gamma: float):
    """Derivative of :func:`huber`; for ``gamma == 0`` the sign, with 0 chosen at 0."""
    if gamma < 0:
        raise ProblemError(f"negative Huber knee: {gamma}")
    u = np.asarray(u, dtype=float)
    if gamma == 0.0:
        out = np.sign(u)
    else:
        out = np.where(np.abs(u) <= gamma, u / gamma, np.sign(u))
    return out if out.ndim else float(out)


def expected_huber_gaussian(variance: float, gamma: float) -> float:
    """E[huber(Z, gamma)] for Z ~ Normal(0, variance), in closed form.

    Splitting the integral at the knee gives, with tau = sqrt(variance) and
    k = gamma / (sqrt(2) tau),

        E H = (tau^2 / 2 gamma) erf(k) - phi + 2 (phi - (gamma/4) erfc(k)),
        phi = (tau / sqrt(2 pi)) exp(-k^2),

    and the gamma -> 0 limit is E|Z| = tau sqrt(2/pi).
    """
    if variance < 0:
        raise ProblemError(f"negative variance: {variance}")
    if variance == 0.0:
        return 0.0
    tau = math.sqrt(variance)
    if gamma == 0.0:
        return tau * math.sqrt(2.0 / math.pi)
    k = gamma / (math.sqrt(2.0) * tau)
    phi = tau / _SQRT_2PI * math.exp(-k * k)
    quad_part = variance / (2.0 * gamma) * math.erf(k) - phi
    linear_part = 2.0 * (phi - 0.25 * gamma * math.erfc(k))
    return quad_part + linear_part


# ---------------------------------------------------------------------------
# Declared constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemConstants:
    """Lipschitz/variance/bound constants attached to an instance.

    ``outer_lipschitz``/``outer_smoothness`` describe the outer cost in its
    argument; ``inner_lipschitz`` the inner map in ``x``.  ``outer_bound`` and
    ``inner_bound`` are magnitude envelopes over the domain ball (for Gaussian
    records they use a 3-sigma norm envelope, so they hold on sampled inputs
    up to negligible probability rather than surely).  ``outer_variance`` and
    ``inner_variance`` are declared at reference points with
    ``||x|| <= sqrt(d)``; ``inner_variance`` is the trace of the inner noise
    covariance.  ``growth`` is an optional (rate, exponent) pair certifying
    that empirical objectives grow at least like
    ``rate * distance**(1 + exponent)`` above their minimum.
    """

    outer_lipschitz: float
    inner_lipschitz: float
    outer_smoothness: Optional[float]
    outer_bound: float
    inner_bound: float
    outer_variance: float
    inner_variance: float
    growth: Optional[tuple[float, float]] = None


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsoProblem:
    """An immutable nested-expectation problem over a Euclidean ball.

    ``inner_affine`` declares that ``inner_eval`` is affine in the eta record,
    which lets evaluators collapse inner sample blocks to their means before
    applying the map.  ``eta_independent`` declares that the inner law does
    not depend on xi, making the shared-inner-block sampling scheme legal.
    """

    dimension: int
    inner_dimension: int
    domain_radius: float
    outer_eval: Callable[[Array, Array], Array]
    outer_grad: Callable[[Array, Array], Array]
    inner_eval: Callable[[Array, Array, Array], Array]
    inner_jac: Callable[[Array, Array, Array], Array]
    sample_outer: Callable[[np.random.Generator, int], Array]
    sample_inner_given: Callable[[np.random.Generator, Array, int], Array]
    sample_inner_marginal: Optional[Callable[[np.random.Generator, int], Array]]
    inner_mean_given: Callable[[Array], Array]
    outer_width: int
    inner_width: int
    smooth_outer: bool
    inner_affine: bool
    eta_independent: bool
    constants: ProblemConstants
    closed_form: Optional[Callable[[Array], float]]
    optimum_value: Optional[float]
    label: str
    # identity of the collapsed (exact-inner-mean) problem; instances whose
    # collapsed objectives coincide may share reference solutions
    reference_key: str = ""

    def check_point(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ProblemError(f"point has shape {x.shape}, expected ({self.dimension},)")
        return x


# ---------------------------------------------------------------------------
# Instance specifications (JSON-expressible)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustLogistic:
    """Logistic loss on conditionally-noisy features.

    Outer record: feature vector a ~ N(0, sigma_xi2 I_d) with label
    b = sign(a.x_star) (+1 at 0); inner record eta | xi ~ N(a, sigma_eta2 I_d).
    """

    d: int
    sigma_xi2: float = 1.0
    sigma_eta2: float = 10.0
    x_star: Optional[tuple[float, ...]] = None
    domain_radius: float = 100.0


@dataclass(frozen=True)
class IndependentLogistic:
    """Logistic loss with additive noise independent of the outer record.

    eta ~ N(0, sigma_eta2 I_d) marginally; the inner map shifts the feature,
    g = (eta + a).x, so the noiseless objective coincides with RobustLogistic.
    """

    d: int
    sigma_xi2: float = 1.0
    sigma_eta2: float = 10.0
    x_star: Optional[tuple[float, ...]] = None
    domain_radius: float = 100.0


@dataclass(frozen=True)
class LavRegression:
    """Least-absolute-value regression on noisy features, optionally smoothed.

    b = a.x_star exactly, so the population optimum is x_star with value 0.
    ``smoothing`` is None for the absolute-value loss or a Huber knee > 0.
    """

    d: int
    sigma_xi2: float = 1.0
    sigma_eta2: float = 10.0
    x_star: Optional[tuple[float, ...]] = None
    smoothing: Optional[float] = None
    domain_radius: float = 100.0


@dataclass(frozen=True)
class Huber1D:
    """One-dimensional shifted-noise instance with a fully analytic optimum.

    No outer randomness; eta ~ N(0, sigma_eta2); the objective is
    F(x) = huber(x, gamma) + x^2 with minimum 0 at x = 0.  The empirical
    counterpart built from an inner mean ``eta_bar`` is minimized exactly at
    ``-eta_bar``.
    """

    gamma: float = 0.1
    sigma_eta2: float = 1.0
    domain_radius: float = 100.0


@dataclass(frozen=True)
class SineQG:
    """One-dimensional sine-squared instance with quadratic growth ``mu``.

    xi ~ N(0, 1); eta | xi is uniform on an interval of width 1/2 whose lower
    end is inner_offset + w(xi), w(xi) = sigmoid(xi)/4, so eta >= inner_offset
    >= sqrt(mu) almost surely.  Every empirical objective then dominates
    mu * x^2 and has its unique minimum at 0.
    """

    mu: float = 1.0
    inner_offset: Optional[float] = None
    domain_radius: float = 100.0


InstanceSpec = Union[RobustLogistic, IndependentLogistic, LavRegression, Huber1D, SineQG]

_INSTANCE_KINDS = {
    "robust_logistic": RobustLogistic,
    "independent_logistic": IndependentLogistic,
    "lav_regression": LavRegression,
    "huber1d": Huber1D,
    "sine_qg": SineQG,
}


def instance_from_json(obj: dict) -> InstanceSpec:
    """Build an instance spec from a JSON-style dict with a ``kind`` tag."""
    data = dict(obj)
    kind = data.pop("kind", None)
    if kind not in _INSTANCE_KINDS:
        raise ProblemError(f"unknown instance kind: {kind!r}")
    cls = _INSTANCE_KINDS[kind]
    if "x_star" in data and data["x_star"] is not None:
        data["x_star"] = tuple(float(v) for v in data["x_star"])
    try:
        return cls(**data)
    except TypeError as exc:
        raise ProblemError(f"bad fields for {kind}: {exc}") from exc


def instance_kind(spec: InstanceSpec) -> str:
    for kind, cls in _INSTANCE_KINDS.items():
        if isinstance(spec, cls):
            return kind
    raise ProblemError(f"not an instance spec: {spec!r}")


# ---------------------------------------------------------------------------
# Oracles for the true objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedForm:
    """Request the instance's deterministic value oracle."""


@dataclass(frozen=True)
class MonteCarlo:
    """Average the outer cost over fresh outer draws, with the inner
    expectation taken exactly via the instance's conditional mean."""

    draws: int = 10**6
    seed: int = 0


OracleSpec = Union[ClosedForm, MonteCarlo]


class CollapsedSampleOracle:
    """A frozen Monte Carlo estimate of F built from one set of outer draws.

    The inner expectation is exact (conditional mean), so only one sampling
    layer remains.  Reusing the same draws for every evaluation makes the
    oracle a fixed deterministic function whose errors are common across the
    points being compared.
    """

    def __init__(self, problem: CsoProblem, draws: int, seed=0, _chunk: int = 200_000):
        rng = np.random.default_rng(seed)
        xs = []
        means = []
        remaining = int(draws)
        if remaining <= 0:
            raise ProblemError(f"oracle draws must be positive, got {draws}")
        while remaining > 0:
            c = min(remaining, _chunk)
            xi = problem.sample_outer(rng, c)
            xs.append(xi)
            means.append(problem.inner_mean_given(xi))
            remaining -= c
        self.problem = problem
        self.outer = np.concatenate(xs, axis=0)
        self.inner_means = np.concatenate(means, axis=0)
        self.draws = int(draws)

    def value(self, x: Array) -> float:
        x = self.problem.check_point(x)
        u = self.problem.inner_eval(x, self.outer, self.inner_means)
        return float(np.mean(self.problem.outer_eval(u, self.outer)))

    def value_and_se(self, x: Array) -> tuple[float, float]:
        x = self.problem.check_point(x)
        u = self.problem.inner_eval(x, self.outer, self.inner_means)
        vals = self.problem.outer_eval(u, self.outer)
        return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(self.draws))


def true_objective(problem: CsoProblem, x: Array, oracle: OracleSpec) -> float:
    """Evaluate F(x) with the requested oracle.

    Raises :class:`ProblemError` when a closed form is requested for an
    instance that does not carry one.
    """
    x = problem.check_point(x)
    if isinstance(oracle, ClosedForm):
        if problem.closed_form is None:
            raise ProblemError(f"no closed-form objective for {problem.label}")
        return float(problem.closed_form(x))
    if isinstance(oracle, MonteCarlo):
        return CollapsedSampleOracle(problem, oracle.draws, seed=oracle.seed).value(x)
    raise ProblemError(f"unknown oracle spec: {oracle!r}")


# ---------------------------------------------------------------------------
# Logistic helpers
# ---------------------------------------------------------------------------

def _sigmoid(z: Array) -> Array:
    # branch form keeps denormal-scale outputs for very negative z, where
    # tanh-based formulas round to exactly 0 and kill gradients
    z = np.asarray(z, dtype=float)
    pos = 1.0 / (1.0 + np.exp(-np.maximum(z, 0.0)))
    ez = np.exp(np.minimum(z, 0.0))
    return np.where(z >= 0, pos, ez / (1.0 + ez))


def logistic_collapsed_value(x: Array, x_star: Array, sigma_xi2: float) -> float:
    """Deterministic quadrature for E log(1 + exp(-sign(a.x_star) a.x)).

    With s = a.x_star and the component of a.x orthogonal to s independent of
    s, the expectation reduces to a one-dimensional integral over s > 0 of a
    Gauss-Hermite average, accurate to ~1e-9.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    ns2 = float(x_star @ x_star)
    if ns2 <= 0:
        raise ProblemError("x_star must be nonzero")
    tau_s = math.sqrt(sigma_xi2 * ns2)
    c1 = float(x_star @ x) / ns2
    perp = x - c1 * x_star
    nu = math.sqrt(sigma_xi2 * float(perp @ perp))
    nodes, weights = np.polynomial.hermite_e.hermegauss(96)
    weights = weights / _SQRT_2PI

    if nu == 0.0:
        def h(s: float) -> float:
            return float(np.logaddexp(0.0, -c1 * s))
    else:
        def h(s: float) -> float:
            return float(np.logaddexp(0.0, -(c1 * s + nu * nodes)) @ weights)

    def integrand(s: float) -> float:
        return 2.0 * h(s) * math.exp(-s * s / (2.0 * tau_s**2)) / (_SQRT_2PI * tau_s)

    val, _ = quad(integrand, 0.0, 40.0 * tau_s, limit=300)
    return float(val)


# ---------------------------------------------------------------------------
# Instance builders
# ---------------------------------------------------------------------------

def _default_anchor(d: int) -> Array:
    return np.ones(d) / math.sqrt(d)


def _resolve_anchor(d: int, x_star) -> Array:
    if x_star is None:
        anchor = _default_anchor(d)
    else:
        anchor = np.asarray(x_star, dtype=float)
        if anchor.shape != (d,):
            raise ProblemError(f"x_star has shape {anchor.shape}, expected ({d},)")
        if not np.any(anchor):
            raise ProblemError("x_star must be nonzero")
    anchor.flags.writeable = False
    return anchor


def _anchor_tag(d: int, x_star) -> str:
    if x_star is None:
        return ""
    digest = hashlib.sha1(np.asarray(x_star, dtype=float).tobytes()).hexdigest()[:8]
    return f" xstar={digest}"


def _check_common(d: int, sigma_xi2: float, sigma_eta2: float, radius: float) -> None:
    if d < 1:
        raise ProblemError(f"dimension must be >= 1, got {d}")
    if sigma_xi2 <= 0:
        raise ProblemError(f"outer variance scale must be positive, got {sigma_xi2}")
    if sigma_eta2 < 0:
        raise ProblemError(f"inner variance scale must be >= 0, got {sigma_eta2}")
    if radius <= 0:
        raise ProblemError(f"domain radius must be positive, got {radius}")


def _build_logistic(spec, independent: bool) -> CsoProblem:
    _check_common(spec.d, spec.sigma_xi2, spec.sigma_eta2, spec.domain_radius)
    d = spec.d
    anchor = _resolve_anchor(d, spec.x_star)
    sx = math.sqrt(spec.sigma_xi2)
    se = math.sqrt(spec.sigma_eta2)
    radius = float(spec.domain_radius)

    def sample_outer(rng, n):
        a = sx * rng.standard_normal((n, d))
        b = np.where(a @ anchor >= 0.0, 1.0, -1.0)
        return np.concatenate([a, b[:, None]], axis=1)

    if independent:
        def sample_inner_given(rng, xi, m):
            return se * rng.standard_normal(xi.shape[:-1] + (m, d))

        def sample_inner_marginal(rng, m):
            return se * rng.standard_normal((m, d))

        def inner_mean_given(xi):
            return np.zeros(xi.shape[:-1] + (d,))

        def inner_eval(x, xi, eta):
            return ((eta + xi[..., :d]) @ x)[..., None]

        def inner_jac(x, xi, eta):
            return (eta + xi[..., :d])[..., None, :]
    else:
        def sample_inner_given(rng, xi, m):
            a = xi[..., :d]
            return a[..., None, :] + se * rng.standard_normal(xi.shape[:-1] + (m, d))

        sample_inner_marginal = None

        def inner_mean_given(xi):
            return xi[..., :d].copy()

        def inner_eval(x, xi, eta):
            return (eta @ x)[..., None]

        def inner_jac(x, xi, eta):
            return eta[..., None, :]

    def outer_eval(u, xi):
        return np.logaddexp(0.0, -xi[..., -1] * u[..., 0])

    def outer_grad(u, xi):
        b = xi[..., -1]
        return (-b * _sigmoid(-b * u[..., 0]))[..., None]

    def closed_form(x):
        return logistic_collapsed_value(x, anchor, spec.sigma_xi2)

    # envelope of the eta record's Euclidean norm (both branches share it)
    eta_norm = 3.0 * math.sqrt(d * (spec.sigma_xi2 + spec.sigma_eta2))
    constants = ProblemConstants(
        outer_lipschitz=1.0,
        inner_lipschitz=eta_norm,
        outer_smoothness=0.25,
        outer_bound=math.log(2.0) + radius * eta_norm,
        inner_bound=radius * eta_norm,
        outer_variance=2.0 * math.log(2.0) ** 2 + 2.0 * spec.sigma_xi2 * d,
        inner_variance=d * spec.sigma_eta2,
    )
    kind = "independent_logistic" if independent else "robust_logistic"
    label = (f"{kind} d={d} sxi2={spec.sigma_xi2:g} seta2={spec.sigma_eta2:g}"
             + _anchor_tag(d, spec.x_star))
    # both logistic kinds collapse to the same noiseless objective
    reference_key = (f"logistic_collapsed d={d} sxi2={spec.sigma_xi2:g} R={radius:g}"
                     + _anchor_tag(d, spec.x_star))
    return CsoProblem(
        dimension=d, inner_dimension=1, domain_radius=radius,
        outer_eval=outer_eval, outer_grad=outer_grad,
        inner_eval=inner_eval, inner_jac=inner_jac,
        sample_outer=sample_outer, sample_inner_given=sample_inner_given,
        sample_inner_marginal=sample_inner_marginal,
        inner_mean_given=inner_mean_given,
        outer_width=d + 1, inner_width=d,
        smooth_outer=True, inner_affine=True, eta_independent=independent,
        constants=constants, closed_form=closed_form, optimum_value=None,
        label=label, reference_key=reference_key,
    )


def _build_lav(spec: LavRegression) -> CsoProblem:
    _check_common(spec.d, spec.sigma_xi2, spec.sigma_eta2, spec.domain_radius)
    gamma = 0.0 if spec.smoothing is None else float(spec.smoothing)
    if gamma < 0:
        raise ProblemError(f"negative smoothing knee: {gamma}")
    d = spec.d
    anchor = _resolve_anchor(d, spec.x_star)
    sx = math.sqrt(spec.sigma_xi2)
    se = math.sqrt(spec.sigma_eta2)
    radius = float(spec.domain_radius)

    def sample_outer(rng, n):
        a = sx * rng.standard_normal((n, d))
        return np.concatenate([a, (a @ anchor)[:, None]], axis=1)

    def sample_inner_given(rng, xi, m):
        a = xi[..., :d]
        return a[..., None, :] + se * rng.standard_normal(xi.shape[:-1] + (m, d))

    def inner_mean_given(xi):
        return xi[..., :d].copy()

    def inner_eval(x, xi, eta):
        return (eta @ x - xi[..., -1])[..., None]

    def inner_jac(x, xi, eta):
        return eta[..., None, :]

    def outer_eval(u, xi):
        return huber(u[..., 0], gamma) if gamma > 0 else np.abs(u[..., 0])

    def outer_grad(u, xi):
        return huber_grad(u[..., 0], gamma)[..., None]

    def closed_form(x):
        spread2 = spec.sigma_xi2 * float((x - anchor) @ (x - anchor))
        if gamma == 0.0:
            return math.sqrt(2.0 * spread2 / math.pi)
        return expected_huber_gaussian(spread2, gamma)

    anchor_norm = float(np.linalg.norm(anchor))
    eta_norm = 3.0 * math.sqrt(d * (spec.sigma_xi2 + spec.sigma_eta2))
    bound = eta_norm * (radius + anchor_norm)
    constants = ProblemConstants(
        outer_lipschitz=1.0,
        inner_lipschitz=eta_norm,
        outer_smoothness=(1.0 / gamma) if gamma > 0 else None,
        outer_bound=bound,
        inner_bound=bound,
        outer_variance=spec.sigma_xi2 * (math.sqrt(d) + anchor_norm) ** 2,
        inner_variance=d * spec.sigma_eta2,
    )
    smooth_tag = f" huber={gamma:g}" if gamma > 0 else ""
    label = (f"lav_regression d={d} sxi2={spec.sigma_xi2:g} seta2={spec.sigma_eta2:g}"
             + smooth_tag + _anchor_tag(d, spec.x_star))
    return CsoProblem(
        dimension=d, inner_dimension=1, domain_radius=radius,
        outer_eval=outer_eval, outer_grad=outer_grad,
        inner_eval=inner_eval, inner_jac=inner_jac,
        sample_outer=sample_outer, sample_inner_given=sample_inner_given,
        sample_inner_marginal=None,
        inner_mean_given=inner_mean_given,
        outer_width=d + 1, inner_width=d,
        smooth_outer=gamma > 0, inner_affine=True, eta_independent=False,
        constants=constants, closed_form=closed_form, optimum_value=0.0,
        label=label,
    )


def _build_huber1d(spec: Huber1D) -> CsoProblem:
    if spec.gamma < 0:
        raise ProblemError(f"negative Huber knee: {spec.gamma}")
    if spec.sigma_eta2 < 0:
        raise ProblemError(f"inner variance scale must be >= 0, got {spec.sigma_eta2}")
    if spec.domain_radius <= 0:
        raise ProblemError(f"domain radius must be positive, got {spec.domain_radius}")
    gamma = float(spec.gamma)
    se = math.sqrt(spec.sigma_eta2)
    radius = float(spec.domain_radius)

    def sample_outer(rng, n):
        return np.empty((n, 0))

    def sample_inner_given(rng, xi, m):
        return se * rng.standard_normal(xi.shape[:-1] + (m, 1))

    def sample_inner_marginal(rng, m):
        return se * rng.standard_normal((m, 1))

    def inner_mean_given(xi):
        return np.zeros(xi.shape[:-1] + (1,))

    def inner_eval(x, xi, eta):
        return x[0] + eta

    def inner_jac(x, xi, eta):
        return np.ones(eta.shape[:-1] + (1, 1))

    def outer_eval(u, xi):
        v = u[..., 0]
        return huber(v, gamma) + v * v

    def outer_grad(u, xi):
        v = u[..., 0]
        return (huber_grad(v, gamma) + 2.0 * v)[..., None]

    def closed_form(x):
        return float(huber(x[0], gamma) + x[0] ** 2)

    reach = radius + 6.0 * se  # |x + eta| envelope
    constants = ProblemConstants(
        outer_lipschitz=1.0 + 2.0 * reach,
        inner_lipschitz=1.0,
        outer_smoothness=(1.0 / gamma + 2.0) if gamma > 0 else None,
        outer_bound=reach + reach**2,
        inner_bound=reach,
        outer_variance=0.0,
        inner_variance=spec.sigma_eta2,
        growth=(1.0, 1.0),
    )
    label = f"huber1d gamma={gamma:g} seta2={spec.sigma_eta2:g}"
    return CsoProblem(
        dimension=1, inner_dimension=1, domain_radius=radius,
        outer_eval=outer_eval, outer_grad=outer_grad,
        inner_eval=inner_eval, inner_jac=inner_jac,
        sample_outer=sample_outer, sample_inner_given=sample_inner_given,
        sample_inner_marginal=sample_inner_marginal,
        inner_mean_given=inner_mean_given,
        outer_width=0, inner_width=1,
        smooth_outer=gamma > 0, inner_affine=True, eta_independent=True,
        constants=constants, closed_form=closed_form, optimum_value=0.0,
        label=label,
    )


def _build_sine_qg(spec: SineQG) -> CsoProblem:
    if spec.mu <= 0:
        raise ProblemError(f"growth rate must be positive, got {spec.mu}")
    offset = math.sqrt(spec.mu) if spec.inner_offset is None else float(spec.inner_offset)
    if offset < math.sqrt(spec.mu):
        raise ProblemError(f"inner_offset {offset} below sqrt(mu) {math.sqrt(spec.mu)}")
    if spec.domain_radius <= 0:
        raise ProblemError(f"domain radius must be positive, got {spec.domain_radius}")
    radius = float(spec.domain_radius)

    def low_edge(xi):
        return offset + 0.25 * _sigmoid(xi[..., 0])

    def sample_outer(rng, n):
        return rng.standard_normal((n, 1))

    def sample_inner_given(rng, xi, m):
        lo = low_edge(xi)[..., None]
        return lo[..., None] + 0.5 * rng.random(xi.shape[:-1] + (m, 1))

    def inner_mean_given(xi):
        return (low_edge(xi) + 0.25)[..., None]

    def inner_eval(x, xi, eta):
        return x[0] * eta

    def inner_jac(x, xi, eta):
        return eta[..., None]

    def outer_eval(u, xi):
        v = u[..., 0]
        return v * v + 3.0 * np.sin(v) ** 2

    def outer_grad(u, xi):
        v = u[..., 0]
        return (2.0 * v + 3.0 * np.sin(2.0 * v))[..., None]

    nodes, weights = np.polynomial.hermite_e.hermegauss(192)
    weights = weights / _SQRT_2PI
    mean_grid = offset + 0.25 * _sigmoid(nodes) + 0.25

    def closed_form(x):
        v = mean_grid * x[0]
        return float((v * v + 3.0 * np.sin(v) ** 2) @ weights)

    top = offset + 0.75        # eta upper edge, surely
    reach = top * radius       # |eta * x| envelope over the whole ball
    constants = ProblemConstants(
        outer_lipschitz=2.0 * reach + 3.0,
        inner_lipschitz=top,
        outer_smoothness=8.0,
        outer_bound=reach**2 + 3.0,
        inner_bound=reach,
        outer_variance=(top + 3.0) ** 2,   # reference |x| <= 1
        inner_variance=0.25 / 12.0,
        growth=(spec.mu, 1.0),
    )
    label = f"sine_qg mu={spec.mu:g} offset={offset:g}"
    return CsoProblem(
        dimension=1, inner_dimension=1, domain_radius=radius,
        outer_eval=outer_eval, outer_grad=outer_grad,
        inner_eval=inner_eval, inner_jac=inner_jac,
        sample_outer=sample_outer, sample_inner_given=sample_inner_given,
        sample_inner_marginal=None,
        inner_mean_given=inner_mean_given,
        outer_width=1, inner_width=1,
        smooth_outer=True, inner_affine=True, eta_independent=False,
        constants=constants, closed_form=closed_form, optimum_value=0.0,
        label=label,
    )


def build(spec: InstanceSpec) -> CsoProblem:
    """Realize an instance spec as a problem with samplers and oracles."""
    if isinstance(spec, RobustLogistic):
        return _build_logistic(spec, independent=False)
    if isinstance(spec, IndependentLogistic):
        return _build_logistic(spec, independent=True)
    if isinstance(spec, LavRegression):
        return _build_lav(spec)
    if isinstance(spec, Huber1D):
        return _build_huber1d(spec)
    if isinstance(spec, SineQG):
        return _build_sine_qg(spec)
    raise ProblemError(f"not an instance spec: {spec!r}")
