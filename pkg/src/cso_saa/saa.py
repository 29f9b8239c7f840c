"""Empirical nested-average objective and its estimation-error probe.

Given a dataset, the empirical objective is

    value(x) = (1/n) sum_i f(u_i(x), xi_i) + (reg/2) ||x||^2,
    u_i(x)   = (1/m) sum_j g(x, xi_i, eta_ij),

with the inner index set running over row i's private block (nested scheme)
or over the one shared block (shared scheme).  Summation order is fixed:
inner blocks are averaged with numpy's pairwise mean in storage order, so
evaluation is reproducible and permutation-invariant to ~1e-12 relative.

For instances whose inner map is affine in the eta record, the inner average
collapses to the map applied at the block's mean record; the mean is cached
per objective (it does not depend on x), while the x-dependent composition is
recomputed at every evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import ClosedForm, CollapsedSampleOracle, CsoProblem, MonteCarlo, OracleSpec
from .sampling import (CONDITIONAL, INDEPENDENT, Dataset, IndependentDataset,
                       SamplingError)

Array = np.ndarray


class SaaObjective:
    """Value and (sub)gradient of the empirical objective on one dataset.

    ``regularizer`` adds (mu/2)||x||^2; 0 disables it.  Evaluation is pure in
    (dataset, x, regularizer) and safe to call concurrently.
    """

    def __init__(self, problem: CsoProblem, dataset: Dataset, regularizer: float = 0.0):
        if regularizer < 0:
            raise ValueError(f"regularizer weight must be >= 0, got {regularizer}")
        if isinstance(dataset, IndependentDataset) and not problem.eta_independent:
            raise SamplingError(
                f"{problem.label}: shared inner block is invalid for this instance")
        self.problem = problem
        self.dataset = dataset
        self.regularizer = float(regularizer)
        self._inner_mean = None  # cached eta-record block mean (affine instances)

    @property
    def shared_inner(self) -> bool:
        return isinstance(self.dataset, IndependentDataset)

    def _eta_mean(self) -> Array:
        if self._inner_mean is None:
            axis = 0 if self.shared_inner else 1
            self._inner_mean = self.dataset.inner.mean(axis=axis)
        return self._inner_mean

    def _inner_averages(self, x: Array) -> Array:
        """u_i(x) for all i, shape (n, k)."""
        p, ds = self.problem, self.dataset
        xi = ds.outer
        if p.inner_affine:
            eta = self._eta_mean()
            if self.shared_inner:
                eta = np.broadcast_to(eta, (ds.n,) + eta.shape)
            return p.inner_eval(x, xi, eta)
        if self.shared_inner:
            vals = p.inner_eval(x, xi[:, None, :], ds.inner[None, :, :])
        else:
            vals = p.inner_eval(x, xi[:, None, :], ds.inner)
        return vals.mean(axis=1)

    def value(self, x: Array) -> float:
        x = self.problem.check_point(x)
        u = self._inner_averages(x)
        out = float(np.mean(self.problem.outer_eval(u, self.dataset.outer)))
        if self.regularizer:
            out += 0.5 * self.regularizer * float(x @ x)
        return out

    def subgradient(self, x: Array) -> Array:
        """(1/n) sum_i J_i(x)^T f'(u_i(x), xi_i) + reg * x, where J_i is the
        inner block's average Jacobian; a valid subgradient element at kinks
        of the outer cost (sign fixed to 0 at 0)."""
        return self.value_and_subgradient(x)[1]

    def value_and_subgradient(self, x: Array) -> tuple[float, Array]:
        """Both quantities from one pass over the inner averages."""
        x = self.problem.check_point(x)
        p, ds = self.problem, self.dataset
        xi = ds.outer
        u = self._inner_averages(x)
        val = float(np.mean(p.outer_eval(u, xi)))
        w = p.outer_grad(u, xi)                      # (n, k)
        if p.inner_affine:
            eta = self._eta_mean()
            if self.shared_inner:
                eta = np.broadcast_to(eta, (ds.n,) + eta.shape)
            jac = p.inner_jac(x, xi, eta)            # (n, k, d)
        elif self.shared_inner:
            jac = p.inner_jac(x, xi[:, None, :], ds.inner[None, :, :]).mean(axis=1)
        else:
            jac = p.inner_jac(x, xi[:, None, :], ds.inner).mean(axis=1)
        grad = np.einsum("nk,nkd->d", w, jac) / ds.n
        if self.regularizer:
            val += 0.5 * self.regularizer * float(x @ x)
            grad = grad + self.regularizer * x
        return val, grad


# ---------------------------------------------------------------------------
# Bias / variance / MSE probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MseProbeReport:
    """Replicated estimation-error measurements at a fixed probe point.

    ``bias_hat`` is mean(value_r) - F(x) over R fresh datasets, ``var_hat``
    the sample variance of value_r, ``mse_hat`` the mean squared deviation
    from F(x).  Up to sampling error, mse_hat = bias_hat^2 + var_hat.
    ``bias_bound``/``var_bound`` are the declared-constant predictions
    (inner-average bias and nested-average variance envelopes).
    """

    point: tuple[float, ...]
    replications: int
    bias_hat: float
    var_hat: float
    mse_hat: float
    se_bias: float
    se_var: float
    se_mse: float
    bias_bound: float
    var_bound: float
    true_value: float
    true_value_se: float

    _FIELDS = ("point", "replications", "bias_hat", "var_hat", "mse_hat",
               "se_bias", "se_var", "se_mse", "bias_bound", "var_bound",
               "true_value", "true_value_se")

    def to_json(self) -> str:
        payload = {name: getattr(self, name) for name in self._FIELDS}
        payload["point"] = list(self.point)
        return json.dumps(payload)

    def csv_header(self) -> str:
        return ",".join(self._FIELDS)

    def to_csv_row(self) -> str:
        cells = []
        for name in self._FIELDS:
            val = getattr(self, name)
            if name == "point":
                cells.append(";".join(format(v, ".17g") for v in val))
            elif isinstance(val, int):
                cells.append(str(val))
            else:
                cells.append(format(val, ".17g"))
        return ",".join(cells)


def theoretical_bias_bound(problem: CsoProblem, m: int) -> float:
    """Inner-average bias envelope from declared constants:
    L * sigma_in / sqrt(m), or S * sigma_in^2 / (2 m) for smooth outer cost."""
    c = problem.constants
    sigma_in = math.sqrt(c.inner_variance)
    if problem.smooth_outer and c.outer_smoothness is not None:
        return c.outer_smoothness * c.inner_variance / (2.0 * m)
    return c.outer_lipschitz * sigma_in / math.sqrt(m)


def theoretical_var_bound(problem: CsoProblem, n: int, m: int) -> float:
    """Variance envelope sigma_out^2/n + 4 M L sigma_in / (n sqrt(m))."""
    c = problem.constants
    sigma_in = math.sqrt(c.inner_variance)
    return (c.outer_variance / n
            + 4.0 * c.outer_bound * c.outer_lipschitz * sigma_in / (n * math.sqrt(m)))


_CHUNK_ELEMENTS = 2**23  # ~8M floats per sampled block


def mse_probe(problem: CsoProblem, x: Array, n: int, m: int, scheme: str,
              replications: int, seed, oracle: Optional[OracleSpec] = None,
              ) -> MseProbeReport:
    """Estimate bias/variance/MSE of the empirical objective at a fixed x.

    Draws ``replications`` independent datasets of shape (n, m) under the
    given scheme, evaluates the empirical objective at x each time, and
    compares against F(x) from the instance's deterministic oracle (or a
    high-budget collapsed Monte Carlo estimate whose standard error is folded
    into the reported uncertainties).  x must be chosen before sampling.

    Replications are drawn in fixed-size chunks from a single seeded stream,
    so the result is deterministic in (problem, x, n, m, scheme, R, seed).
    """
    x = problem.check_point(x)
    if replications < 30:
        raise ValueError(f"need at least 30 replications, got {replications}")
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if scheme not in (CONDITIONAL, INDEPENDENT):
        raise ValueError(f"unknown scheme: {scheme!r}")
    if scheme == INDEPENDENT and not problem.eta_independent:
        raise SamplingError(
            f"{problem.label}: shared inner block is invalid for this instance")

    true_value, true_se = _resolve_true_value(problem, x, oracle)

    rng = np.random.default_rng(seed)
    inner_cost = n * m * max(1, problem.inner_width)
    chunk = max(1, min(replications, _CHUNK_ELEMENTS // max(1, inner_cost)))
    values = np.empty(replications)
    done = 0
    while done < replications:
        c = min(chunk, replications - done)
        values[done:done + c] = _replicated_values(problem, x, n, m, scheme, c, rng)
        done += c

    mean_val = float(np.mean(values))
    bias = mean_val - true_value
    var = float(np.var(values, ddof=1)) if replications > 1 else 0.0
    dev2 = (values - true_value) ** 2
    mse = float(np.mean(dev2))

    R = replications
    se_mean = math.sqrt(var / R)
    se_bias = math.sqrt(se_mean**2 + true_se**2)
    centered = values - mean_val
    m4 = float(np.mean(centered**4))
    se_var = math.sqrt(max(m4 - var**2, 0.0) / R)
    se_mse = math.sqrt(float(np.var(dev2, ddof=1)) / R + (2.0 * bias * true_se) ** 2)

    return MseProbeReport(
        point=tuple(float(v) for v in x),
        replications=R,
        bias_hat=bias, var_hat=var, mse_hat=mse,
        se_bias=se_bias, se_var=se_var, se_mse=se_mse,
        bias_bound=theoretical_bias_bound(problem, m),
        var_bound=theoretical_var_bound(problem, n, m),
        true_value=true_value, true_value_se=true_se,
    )


def _resolve_true_value(problem: CsoProblem, x: Array,
                        oracle: Optional[OracleSpec]) -> tuple[float, float]:
    if oracle is None:
        oracle = ClosedForm() if problem.closed_form is not None else MonteCarlo()
    if isinstance(oracle, ClosedForm):
        if problem.closed_form is None:
            raise ValueError(f"no closed-form objective for {problem.label}")
        return float(problem.closed_form(x)), 0.0
    if isinstance(oracle, MonteCarlo):
        frozen = CollapsedSampleOracle(problem, oracle.draws, seed=oracle.seed)
        return frozen.value_and_se(x)
    raise ValueError(f"unknown oracle spec: {oracle!r}")


def _replicated_values(problem: CsoProblem, x: Array, n: int, m: int,
                       scheme: str, count: int, rng: np.random.Generator) -> Array:
    """Empirical values at x for `count` fresh datasets, vectorized."""
    p = problem
    xi = p.sample_outer(rng, count * n).reshape(count, n, p.outer_width)
    if scheme == CONDITIONAL:
        eta = p.sample_inner_given(rng, xi, m)            # (c, n, m, q)
        if p.inner_affine:
            u = p.inner_eval(x, xi, eta.mean(axis=2))      # (c, n, k)
        else:
            u = p.inner_eval(x, xi[:, :, None, :], eta).mean(axis=2)
    else:
        eta = p.sample_inner_marginal(rng, count * m).reshape(count, m, p.inner_width)
        if p.inner_affine:
            u = p.inner_eval(x, xi, eta.mean(axis=1)[:, None, :])
        else:
            u = p.inner_eval(x, xi[:, :, None, :], eta[:, None, :, :]).mean(axis=2)
    return p.outer_eval(u, xi).mean(axis=1)
