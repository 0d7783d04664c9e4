"""Blind separation of time-warped Gaussian sources under a slowly varying mixture."""

from .errors import (ConfigError, DimensionMismatch, InvalidParameter, NoConvergence,
                     NumericFailure, OutOfRange, SingularMatrix, WarpsepError)
from .likelihood import CovarianceModel, LikelihoodPoint, neg_log_likelihood, nll_gradient_B
from .metrics import MetricReport, amari_rho, evaluate, sir
from .separator import BssResult, SeparatorConfig, apply_unmixing, jefas_bss
from .sobi import UnmixingPath, p_sobi, sobi
from .synthgen import Dataset, Spectrum, make_paper_example
from .warpest import JefasConfig, ThetaPath, jefas
from .wavelet import ScaleGrid, WaveletParams, cwt, default_scale_grid, make_scale_grid

__version__ = "0.1.0"

__all__ = [
    "BssResult", "ConfigError", "CovarianceModel", "Dataset", "DimensionMismatch",
    "InvalidParameter", "JefasConfig", "LikelihoodPoint", "MetricReport", "NoConvergence",
    "NumericFailure", "OutOfRange", "ScaleGrid", "SeparatorConfig", "SingularMatrix",
    "Spectrum", "ThetaPath", "UnmixingPath", "WarpsepError", "WaveletParams", "amari_rho",
    "apply_unmixing", "cwt", "default_scale_grid", "evaluate", "jefas", "jefas_bss",
    "make_paper_example", "make_scale_grid", "neg_log_likelihood", "nll_gradient_B",
    "p_sobi", "sir", "sobi",
]
