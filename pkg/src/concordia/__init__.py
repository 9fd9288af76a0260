"""Chance-corrected agreement among multiple raters.

A library and CLI for measuring how far R raters agree when classifying n
subjects into K nominal categories: maximum-likelihood fitting of the
recognition/random-response mixture (overall and per-category agreement
with standard errors and a goodness-of-fit test), the kappa coefficient
family for comparison, a 2x2 special case, parameter conversions, a
model sampler, and bootstrap validation of the analytic variances.
"""

from .binary import BinaryDeltaFit, augment_2x2, fit_binary
from .data import (
    AgreementSummary,
    JointCountTable,
    RatingMatrix,
    collapse_category,
    drop_rater,
    ingest_long,
    joint_counts,
    smooth,
    summarize,
)
from .delta import (
    DeltaFit,
    FitDiagnostics,
    consistencies,
    fit_delta,
    g_of_B,
    lambda_roots,
    profile_log_likelihood,
)
from .errors import (
    ConcordiaError,
    DataError,
    SaturatedModelError,
    ShapeError,
    SingularVarianceError,
    SolverError,
    TableTooLargeError,
    UnreliableResamplingError,
)
from .fileio import load_table, read_counts, read_long_csv, read_wide_csv
from .inference import (
    ConfidenceBounds,
    GofResult,
    InferenceReport,
    chi_square_tail,
    confidence_bounds,
    estimate_variances,
    goodness_of_fit,
)
from .kappa import (
    KappaResult,
    cohen_kappa,
    fleiss_kappa,
    hubert_pairwise_kappa,
    hubert_r_wise_kappa,
    per_category_kappa,
    raw_agreement,
)
from .modeling import (
    BootstrapResult,
    ClassicDeltaParams,
    NewDeltaParams,
    bootstrap_se,
    classic_to_new,
    new_to_classic,
    sample_model,
)
from .report import analyze_table, render_text

__version__ = "0.1.0"

__all__ = [
    "AgreementSummary",
    "BinaryDeltaFit",
    "BootstrapResult",
    "ClassicDeltaParams",
    "ConcordiaError",
    "ConfidenceBounds",
    "DataError",
    "DeltaFit",
    "FitDiagnostics",
    "GofResult",
    "InferenceReport",
    "JointCountTable",
    "KappaResult",
    "NewDeltaParams",
    "RatingMatrix",
    "SaturatedModelError",
    "ShapeError",
    "SingularVarianceError",
    "SolverError",
    "TableTooLargeError",
    "UnreliableResamplingError",
    "analyze_table",
    "augment_2x2",
    "bootstrap_se",
    "chi_square_tail",
    "classic_to_new",
    "cohen_kappa",
    "collapse_category",
    "confidence_bounds",
    "consistencies",
    "drop_rater",
    "estimate_variances",
    "fit_binary",
    "fit_delta",
    "fleiss_kappa",
    "g_of_B",
    "goodness_of_fit",
    "hubert_pairwise_kappa",
    "hubert_r_wise_kappa",
    "ingest_long",
    "joint_counts",
    "lambda_roots",
    "load_table",
    "new_to_classic",
    "per_category_kappa",
    "profile_log_likelihood",
    "raw_agreement",
    "read_counts",
    "read_long_csv",
    "read_wide_csv",
    "render_text",
    "sample_model",
    "smooth",
    "summarize",
]
