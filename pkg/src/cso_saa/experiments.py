"""Replicated budget-sweep studies: allocate, sample, solve, score, emit.

A study is a grid of cells (scheme x budget x allocation strategy, or
scheme x outer count at a fixed budget), each replicated with independently
seeded datasets.  Per-cell errors are the gap between the true objective at
the solver output and the instance's optimal value; the optimal value is
analytic where available and otherwise taken at a cached high-budget
reference solution of the collapsed problem.

Determinism: replication r of cell c draws from SeedSequence([master_seed,
c, r]); reference solutions and Monte Carlo oracles use fixed seeds of their
own, so two runs with the same configuration produce identical reports
regardless of worker count.  Cells run on a thread pool and are assembled in
canonical (cell, replication) order.
"""

from __future__ import annotations

import json
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .problem import (CollapsedSampleOracle, CsoProblem, InstanceSpec, build,
                      huber, instance_from_json)
from .saa import SaaObjective
from .sampling import (CONDITIONAL, INDEPENDENT, SCHEMES, Allocation,
                       ConditionalDataset, Strategy, allocate, derive_seed,
                       parse_strategy, sample_dataset, DEFAULT_EXPONENTS,
                       FixedOuterStrategy)
from .solve import PROJECTED_GRADIENT, SolverConfig, SolverError, solve_saa

# Fixed seeds so oracles and reference solutions are identical across runs
# and master seeds; experiment data never reuses these streams.
_ORACLE_SEED_TAG = 982_451_653
_REFERENCE_SEED_TAG = 104_395_301
REFERENCE_OUTER_SAMPLES = 10**5

ENV_THREADS = "CSO_SAA_THREADS"

DEFAULT_BUDGETS = (1_000, 3_162, 10_000, 31_623, 100_000, 316_228, 1_000_000)


class ExperimentError(ValueError):
    """Configuration errors (bad grids, scheme/instance mismatch)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BudgetSweep:
    pass


@dataclass(frozen=True)
class FixedBudgetVaryN:
    total: int
    n_list: tuple[int, ...]


SweepMode = Union[BudgetSweep, FixedBudgetVaryN]


@dataclass(frozen=True)
class OracleConfig:
    """How to evaluate the true objective: "auto" prefers the instance's
    deterministic value oracle and falls back to frozen collapsed Monte
    Carlo with ``draws`` outer samples."""

    kind: str = "auto"            # auto | closed_form | monte_carlo
    draws: int = 10**6

    def __post_init__(self):
        if self.kind not in ("auto", "closed_form", "monte_carlo"):
            raise ExperimentError(f"unknown oracle kind: {self.kind!r}")
        if self.draws < 2:
            raise ExperimentError(f"oracle draws must be >= 2, got {self.draws}")


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceSpec
    schemes: tuple[str, ...] = (CONDITIONAL,)
    budgets: tuple[int, ...] = DEFAULT_BUDGETS
    strategies: tuple[Strategy, ...] = DEFAULT_EXPONENTS
    replications: int = 30
    master_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    mode: SweepMode = field(default_factory=BudgetSweep)

    def __post_init__(self):
        if self.replications < 1:
            raise ExperimentError(f"replications must be >= 1, got {self.replications}")
        for scheme in self.schemes:
            if scheme not in SCHEMES:
                raise ExperimentError(f"unknown scheme: {scheme!r}")
        if not self.schemes:
            raise ExperimentError("need at least one scheme")
        if isinstance(self.mode, BudgetSweep):
            if not self.budgets:
                raise ExperimentError("need at least one budget")
            if any(t <= 0 for t in self.budgets):
                raise ExperimentError(f"budgets must be positive: {self.budgets}")
            if list(self.budgets) != sorted(self.budgets):
                raise ExperimentError(f"budgets must be sorted: {self.budgets}")
        else:
            if any(not 0 < n < self.mode.total for n in self.mode.n_list):
                raise ExperimentError(
                    f"outer counts must lie in (0, {self.mode.total}): {self.mode.n_list}")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        data = dict(obj)
        try:
            instance = instance_from_json(data.pop("instance"))
        except KeyError:
            raise ExperimentError("config needs an 'instance' object")
        kwargs: dict = {"instance": instance}
        if "schemes" in data:
            kwargs["schemes"] = tuple(data.pop("schemes"))
        if "budgets" in data:
            kwargs["budgets"] = tuple(int(t) for t in data.pop("budgets"))
        if "strategies" in data:
            kwargs["strategies"] = tuple(parse_strategy(s) for s in data.pop("strategies"))
        if "replications" in data:
            kwargs["replications"] = int(data.pop("replications"))
        if "master_seed" in data:
            kwargs["master_seed"] = int(data.pop("master_seed"))
        if "solver" in data:
            kwargs["solver"] = SolverConfig.from_json(data.pop("solver"))
        if "oracle" in data:
            oracle = data.pop("oracle")
            kwargs["oracle"] = OracleConfig(**oracle) if oracle else OracleConfig()
        if "mode" in data:
            mode = data.pop("mode")
            kind = mode.get("kind", "budget_sweep")
            if kind == "budget_sweep":
                kwargs["mode"] = BudgetSweep()
            elif kind == "fixed_budget_vary_n":
                kwargs["mode"] = FixedBudgetVaryN(
                    total=int(mode["T"]), n_list=tuple(int(n) for n in mode["n_list"]))
            else:
                raise ExperimentError(f"unknown sweep mode: {kind!r}")
        if data:
            raise ExperimentError(f"unknown config fields: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Report records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellRecord:
    instance: str
    scheme: str
    total: int
    strategy: str
    n: int
    m: int
    leftover: int
    replication: int
    seed: int
    error: float
    iterations: int
    wall_ms: float
    failed: bool = False


@dataclass(frozen=True)
class SummaryRecord:
    instance: str
    scheme: str
    total: int
    strategy: str
    mean_error: float
    std_error_of_mean: float
    std_dev: float
    count: int
    failures: int


@dataclass(frozen=True)
class ExperimentReport:
    records: tuple[CellRecord, ...]
    summaries: tuple[SummaryRecord, ...]
    f_star: float
    f_star_se: float
    oracle_label: str

    def summary_for(self, scheme: str, total: int, strategy: str) -> SummaryRecord:
        for row in self.summaries:
            if (row.scheme, row.total, row.strategy) == (scheme, total, strategy):
                return row
        raise KeyError((scheme, total, strategy))


RAW_HEADER = "instance,scheme,T,strategy,n,m,leftover,replication,seed,error,iters,wall_ms"
SUMMARY_HEADER = ("instance,scheme,T,strategy,mean_error,std_error_of_mean,"
                  "std_dev,count,failures")


# ---------------------------------------------------------------------------
# Oracle and reference-solution resolution
# ---------------------------------------------------------------------------

class _Oracle:
    def __init__(self, problem: CsoProblem, cfg: OracleConfig):
        kind = cfg.kind
        if kind == "auto":
            kind = "closed_form" if problem.closed_form is not None else "monte_carlo"
        if kind == "closed_form":
            if problem.closed_form is None:
                raise ExperimentError(f"no closed-form objective for {problem.label}")
            self._frozen = None
            self._fn = problem.closed_form
            self.se = 0.0
            self.label = "closed_form"
        else:
            self._frozen = CollapsedSampleOracle(
                problem, cfg.draws, seed=derive_seed(_ORACLE_SEED_TAG))
            self._fn = self._frozen.value
            self.se = None  # point-dependent; filled on demand
            self.label = f"monte_carlo:{cfg.draws}"

    def value(self, x) -> float:
        return float(self._fn(x))

    def value_and_se(self, x) -> tuple[float, float]:
        if self._frozen is None:
            return self.value(x), 0.0
        return self._frozen.value_and_se(x)


_REFERENCE_MEMO: dict[tuple[str, str], tuple[float, float]] = {}


def _sanitize(token: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=-]+", "_", token)


def _reference_value(problem: CsoProblem, oracle: _Oracle,
                     cache_dir: Optional[Path],
                     reference_samples: int) -> tuple[float, float]:
    """Optimal value for instances without an analytic one.

    Solves the collapsed problem (inner expectation exact) on a large fixed
    outer sample and scores the solution with the configured oracle; cached
    per collapsed-problem identity in memory and, when a directory is given,
    on disk as JSON.
    """
    key = (problem.reference_key or problem.label,
           f"{oracle.label} nref={reference_samples}")
    if key in _REFERENCE_MEMO:
        return _REFERENCE_MEMO[key]
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"fstar_{_sanitize(key[0])}_{_sanitize(key[1])}.json"
        if cache_path.exists():
            payload = json.loads(cache_path.read_text())
            value = (float(payload["f_star"]), float(payload["f_star_se"]))
            _REFERENCE_MEMO[key] = value
            return value
    rng = np.random.default_rng(derive_seed(_REFERENCE_SEED_TAG))
    outer = problem.sample_outer(rng, reference_samples)
    means = problem.inner_mean_given(outer)[:, None, :]
    dataset = ConditionalDataset(outer=outer, inner=means)
    objective = SaaObjective(problem, dataset)
    result = solve_saa(objective, SolverConfig(
        method=PROJECTED_GRADIENT, tolerance=1e-8, max_iters=20_000))
    f_star, se = oracle.value_and_se(result.x_hat)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps({
            "collapsed_problem": key[0], "oracle": key[1],
            "reference_outer_samples": reference_samples,
            "solver_iterations": result.iterations,
            "solution": [float(v) for v in result.x_hat],
            "f_star": f_star, "f_star_se": se,
        }, indent=2) + "\n")
    _REFERENCE_MEMO[key] = (f_star, se)
    return f_star, se


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Cell:
    index: int
    scheme: str
    allocation: Allocation


def _enumerate_cells(cfg: ExperimentConfig) -> list[_Cell]:
    cells = []
    if isinstance(cfg.mode, BudgetSweep):
        for scheme in cfg.schemes:
            for total in cfg.budgets:
                for strategy in cfg.strategies:
                    cells.append(allocate(total, strategy, scheme))
    else:
        for scheme in cfg.schemes:
            for n in cfg.mode.n_list:
                cells.append(allocate(cfg.mode.total, FixedOuterStrategy(n), scheme))
    # allocate() already validated; attach indices in canonical order
    out = []
    idx = 0
    for alloc in cells:
        out.append(_Cell(index=idx, scheme=alloc.scheme, allocation=alloc))
        idx += 1
    return out


def resolve_threads(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(ENV_THREADS)
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def run_experiment(cfg: ExperimentConfig, cache_dir=None,
                   threads: Optional[int] = None,
                   reference_samples: int = REFERENCE_OUTER_SAMPLES) -> ExperimentReport:
    """Execute every (cell, replication) task and assemble the report.

    Solver failures mark their replication failed (error = nan) and are
    excluded from summary statistics but counted; oracle and configuration
    failures abort.
    """
    problem = build(cfg.instance)
    if INDEPENDENT in cfg.schemes and not problem.eta_independent:
        raise ExperimentError(
            f"{problem.label}: the shared-inner-block scheme is invalid "
            "because the inner law depends on the outer record")
    oracle = _Oracle(problem, cfg.oracle)
    if problem.optimum_value is not None:
        f_star, f_star_se = float(problem.optimum_value), 0.0
    else:
        f_star, f_star_se = _reference_value(problem, oracle, cache_dir,
                                             reference_samples)

    cells = _enumerate_cells(cfg)
    tasks = [(cell, rep) for cell in cells for rep in range(cfg.replications)]

    def run_task(task) -> CellRecord:
        cell, rep = task
        alloc = cell.allocation
        seed_seq = derive_seed(cfg.master_seed, cell.index, rep)
        seed_id = int(seed_seq.generate_state(1, dtype=np.uint64)[0])
        started = time.perf_counter()
        try:
            dataset = sample_dataset(problem, cell.scheme, alloc.n, alloc.m, seed_seq)
            objective = SaaObjective(problem, dataset)
            result = solve_saa(objective, cfg.solver)
            error = oracle.value(result.x_hat) - f_star
            iterations = result.iterations
            failed = False
        except SolverError:
            error, iterations, failed = math.nan, 0, True
        wall_ms = (time.perf_counter() - started) * 1e3
        return CellRecord(
            instance=problem.label, scheme=cell.scheme, total=alloc.total,
            strategy=alloc.strategy_label, n=alloc.n, m=alloc.m,
            leftover=alloc.leftover, replication=rep, seed=seed_id,
            error=error, iterations=iterations, wall_ms=wall_ms, failed=failed)

    workers = resolve_threads(threads)
    if workers == 1:
        records = [run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_task, tasks))

    summaries = []
    for cell in cells:
        rows = records[cell.index * cfg.replications:(cell.index + 1) * cfg.replications]
        errors = np.array([r.error for r in rows if not r.failed])
        failures = sum(1 for r in rows if r.failed)
        count = errors.size
        mean = float(np.mean(errors)) if count else math.nan
        std = float(np.std(errors, ddof=1)) if count > 1 else 0.0
        sem = std / math.sqrt(count) if count else math.nan
        alloc = cell.allocation
        summaries.append(SummaryRecord(
            instance=problem.label, scheme=cell.scheme, total=alloc.total,
            strategy=alloc.strategy_label, mean_error=mean,
            std_error_of_mean=sem, std_dev=std, count=count, failures=failures))

    return ExperimentReport(records=tuple(records), summaries=tuple(summaries),
                            f_star=f_star, f_star_se=f_star_se,
                            oracle_label=oracle.label)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".17g")


def emit_csv(report: ExperimentReport, out_dir, include_timings: bool = False) -> dict:
    """Write raw.csv and summary.csv under out_dir; returns their paths.

    Timing columns are zeroed unless ``include_timings`` is set, so default
    output is byte-stable across runs and worker counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw_path = out / "raw.csv"
    summary_path = out / "summary.csv"

    lines = [RAW_HEADER]
    for r in report.records:
        wall = _fmt(r.wall_ms) if include_timings else "0"
        lines.append(",".join([
            r.instance, r.scheme, str(r.total), r.strategy, str(r.n), str(r.m),
            str(r.leftover), str(r.replication), str(r.seed), _fmt(r.error),
            str(r.iterations), wall,
        ]))
    raw_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = [SUMMARY_HEADER]
    for s in report.summaries:
        lines.append(",".join([
            s.instance, s.scheme, str(s.total), s.strategy, _fmt(s.mean_error),
            _fmt(s.std_error_of_mean), _fmt(s.std_dev), str(s.count), str(s.failures),
        ]))
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"raw": str(raw_path), "summary": str(summary_path)}


# ---------------------------------------------------------------------------
# Vectorized one-dimensional error study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloSummary:
    mean: float
    se: float
    replications: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "replications": self.replications}


def huber1d_error_study(gamma: float, sigma_eta2: float, m: int,
                        replications: int, seed=0,
                        chunk_elements: int = 2**24) -> MonteCarloSummary:
    """Monte Carlo mean of the optimality gap for the shifted-noise instance.

    Each replication draws m noise samples, applies the exact empirical
    minimizer (the negated inner mean), and scores it against the analytic
    optimum 0; replications are vectorized in chunks.
    """
    if gamma < 0 or sigma_eta2 <= 0 or m < 1 or replications < 2:
        raise ExperimentError(
            f"bad study parameters: gamma={gamma}, sigma_eta2={sigma_eta2}, "
            f"m={m}, replications={replications}")
    rng = np.random.default_rng(derive_seed(seed) if isinstance(seed, int) else seed)
    scale = math.sqrt(sigma_eta2)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = max(1, chunk_elements // m)
    while done < replications:
        c = min(chunk, replications - done)
        noise_mean = scale * rng.standard_normal((c, m)).mean(axis=1)
        # F(-eta_bar) - F* = huber(eta_bar, gamma) + eta_bar^2 (huber is even)
        gaps = huber(noise_mean, gamma) + noise_mean**2
        total += float(gaps.sum())
        total_sq += float((gaps * gaps).sum())
        done += c
    mean = total / replications
    var = max(total_sq / replications - mean**2, 0.0) * replications / (replications - 1)
    return MonteCarloSummary(mean=mean, se=math.sqrt(var / replications),
                             replications=replications)
