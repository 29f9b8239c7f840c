"""Sample average approximation for nested conditional expectations.

Core surface: build an instance (:mod:`cso_saa.problem`), realize a dataset
under a sampling scheme (:mod:`cso_saa.sampling`), assemble and minimize the
empirical objective (:mod:`cso_saa.saa`, :mod:`cso_saa.solve`), evaluate
theoretical envelopes (:mod:`cso_saa.analysis`), and run replicated studies
(:mod:`cso_saa.experiments`).
"""

from .analysis import (BoundInputs, HuberErrorInterval, RateFunction, SubGaussian,
                       VectorBound, bias_variance_bounds, huber1d_expected_error,
                       large_deviation_bound, qg_probe, sample_complexity)
from .experiments import (ExperimentConfig, ExperimentReport, emit_csv,
                          huber1d_error_study, run_experiment)
from .problem import (ClosedForm, CsoProblem, Huber1D, IndependentLogistic,
                      InstanceSpec, LavRegression, MonteCarlo, RobustLogistic,
                      SineQG, build, expected_huber_gaussian, huber, huber_grad,
                      instance_from_json, true_objective)
from .saa import MseProbeReport, SaaObjective, mse_probe
from .sampling import (Allocation, ConditionalDataset, ExponentStrategy,
                       FixedOuterStrategy, IndependentDataset, allocate,
                       derive_seed, sample_conditional, sample_independent)
from .solve import (SolveResult, SolverConfig, huber1d_closed_form, project_ball,
                    solve_saa)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
