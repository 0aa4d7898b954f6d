"""Generalized linear models under holistic constraints via mixed-integer conic programming."""

import logging

from .backends import available_backends, get_backend, register_backend, solve_continuous
from .conic import (
    Cone,
    ConeKind,
    ConicProgram,
    ProgramBuilder,
    Solution,
    SolveStatus,
    cone_membership,
    feasibility_report,
    validate,
)
from .constraints import (
    FairnessCovariance,
    GroupEqual,
    GroupInOut,
    GroupSparsity,
    Include,
    KMax,
    Linear,
    Lower,
    PairwiseSignCoherence,
    RhoMax,
    SignCoherence,
    Upper,
    attach,
    build_fairness_rows,
    correlation_pairs,
    disparate_impact,
)
from .families import (
    Family,
    FamilyLink,
    GlmModel,
    Link,
    aic_bic,
    deviance,
    information_matrix,
    log_likelihood,
    newton_mle,
    null_deviance,
)
from .fit import FitResult, ScalingRecord, hglm_fit, hglm_seq, scale_design, standard_errors
from .formula import agg_binomial, build_model_matrix, format_formula, parse_formula, read_csv
from .mi import BnbConfig, sequence_solve, solve_mi
from .reformulate import apply_probit_scaling, build_program

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [name for name in dir() if not name.startswith("_")]
