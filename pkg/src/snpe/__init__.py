"""Stochastic Newton proximal extragradient solvers with Hessian averaging."""

from .averaging import AveragerState, WeightScheme
from .oracles import OracleConfig
from .problems import (FiniteSumQuadraticProblem, LogSumExpProblem,
                       QuadraticProblem, generate_synthetic_lse)
from .solvers import (AGDConfig, DampedNewtonConfig, SNPEConfig,
                      StochasticNewtonConfig, run, run_agd, run_damped_newton,
                      run_stochastic_newton)

__all__ = [
    "AveragerState",
    "WeightScheme",
    "OracleConfig",
    "LogSumExpProblem",
    "QuadraticProblem",
    "FiniteSumQuadraticProblem",
    "generate_synthetic_lse",
    "SNPEConfig",
    "StochasticNewtonConfig",
    "DampedNewtonConfig",
    "AGDConfig",
    "run",
    "run_agd",
    "run_damped_newton",
    "run_stochastic_newton",
]

__version__ = "0.1.0"
