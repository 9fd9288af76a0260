"""Uncertainty and fit diagnostics for the fitted agreement mixture.

Variances come from the multivariate delta method applied to the
multinomial likelihood; they are valid only at interior fits, so when any
response probability sits at zero (or the fit is the perfect-agreement
boundary) the standard errors are recomputed on the +0.5-smoothed table
and flagged.  Goodness of fit is the classical Pearson chi-square over
all dense cells against the fitted cell probabilities.

The chi-square tail probability is computed in-package from the
regularized incomplete gamma function, so no statistical tables or heavy
dependencies are involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data import AgreementSummary, JointCountTable, smoothed_summary, _check_dense_budget
from .delta import DeltaFit, _fit_summary
from .errors import DataError, SaturatedModelError, SingularVarianceError

_SIDES = ("two", "lower", "upper")


@dataclass(frozen=True)
class InferenceReport:
    """Delta-method standard errors for the mixture parameters.

    ``se_*`` entries are NaN when the corresponding variance expression
    evaluated negative (reported, never floored); ``warnings`` says so.
    ``smoothing_applied`` marks estimates computed on the +0.5 table, in
    which case ``n_used`` is the smoothed total.
    """

    se_delta: float
    se_alpha: np.ndarray
    se_consistency: np.ndarray
    var_delta: float
    var_alpha: np.ndarray
    var_consistency: np.ndarray
    X_cat: np.ndarray
    X_total: float
    smoothing_applied: bool
    n_used: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class GofResult:
    """Pearson goodness-of-fit summary over the dense cell grid."""

    chi_square: float
    df: int
    p_value: float
    cells_expected_lt_1: int
    cells_expected_le_5: int
    reliability_warning: bool
    incompatible: bool


@dataclass(frozen=True)
class ConfidenceBounds:
    """Wald bounds; open sides are +-inf.  Values are not clipped to [-1, 1]."""

    level: float
    sided: str
    delta: tuple[float, float]
    alpha_lo: np.ndarray
    alpha_hi: np.ndarray
    consistency_lo: np.ndarray
    consistency_hi: np.ndarray
    note: str = "bounds are reported unclipped and may fall outside [-1, 1]"


def _category_x(pi: np.ndarray) -> np.ndarray:
    # X_i = 1 / (sum_r 1/pi_ir - 1/prod_r pi_ir); requires all pi > 0
    inv_sum = (1.0 / pi).sum(axis=1)
    prod = pi.prod(axis=1)
    return 1.0 / (inv_sum - 1.0 / prod)


def estimate_variances(fit: DeltaFit, s: AgreementSummary) -> InferenceReport:
    """Delta-method variances of the overall, per-category, and consistency
    estimates.

    When the supplied fit sits on the parameter boundary (perfect agreement
    or some fitted response probability equal to zero), the fit is redone
    on the +0.5-smoothed summary and the variances are evaluated there,
    with ``smoothing_applied`` set.

    Raises
    ------
    SingularVarianceError
        When (R - 1) * X = 1, which annihilates the shared denominator.
    """
    warnings: list[str] = []
    boundary = fit.diagnostics.perfect_agreement or bool(np.any(fit.pi <= 0.0))
    smoothing = fit.diagnostics.smoothing_applied
    eval_fit = fit
    if boundary:
        eval_fit = _fit_summary(smoothed_summary(s), 512, 1e3, False, True)
        smoothing = True

    pi = eval_fit.pi
    if np.any(pi <= 0.0):
        raise SingularVarianceError(
            "response probabilities still sit at zero after smoothing"
        )
    n = eval_fit.summary.n
    R = eval_fit.summary.n_raters
    delta = eval_fit.delta_total
    alpha = eval_fit.alpha
    x_cat = _category_x(pi)
    x_tot = float(x_cat.sum())
    denom = (R - 1) * x_tot - 1.0
    if abs(denom) < 1e-12:
        raise SingularVarianceError("(R - 1) * X - 1 vanished at this fit")

    v_delta = (1.0 - delta) / n * (delta + x_tot / denom)
    v_alpha = (alpha * (1.0 - alpha)
               + (1.0 - delta) * x_cat * ((R - 1) * x_cat / denom - 1.0)) / n
    n_cat = eval_fit.summary.N_cat
    consistency = R * alpha / n_cat
    pi_sum = pi.sum(axis=1)
    pi_sq = (pi**2).sum(axis=1)
    v_cons = (R**2 / (n * n_cat**2)) * (
        n * v_alpha
        - alpha * (1.0 - alpha)
        + alpha * (1.0 - consistency) * (1.0 - (R - 1) / R * consistency)
        + (1.0 - delta) * consistency**2 / R**2 * (pi_sum**2 - pi_sq)
    )

    def _se(v, label):
        v = np.asarray(v, dtype=float)
        neg = v < 0
        if np.any(neg):
            warnings.append(f"negative variance for {label}; its SE is reported as NaN")
        return np.where(neg, np.nan, np.sqrt(np.where(neg, 0.0, v)))

    se_alpha = _se(v_alpha, "alpha")
    se_cons = _se(v_cons, "consistency")
    se_delta = float(_se(np.array([v_delta]), "delta")[0])
    return InferenceReport(
        se_delta=se_delta,
        se_alpha=se_alpha,
        se_consistency=se_cons,
        var_delta=float(v_delta),
        var_alpha=np.asarray(v_alpha),
        var_consistency=np.asarray(v_cons),
        X_cat=x_cat,
        X_total=x_tot,
        smoothing_applied=smoothing,
        n_used=float(n),
        warnings=tuple(warnings),
    )


def confidence_bounds(
    report: InferenceReport,
    fit: DeltaFit,
    level: float = 0.95,
    sided: str = "two",
) -> ConfidenceBounds:
    """Wald confidence bounds for the overall, per-category, and consistency
    estimates.

    ``sided`` is ``"two"`` for an interval, ``"lower"`` for a one-sided
    lower bound at the given confidence, or ``"upper"`` for the mirror.
    Point estimates come from ``fit``; standard errors from ``report``
    (possibly computed on the smoothed table).
    """
    if not 0.0 < level < 1.0:
        raise DataError(f"confidence level must be in (0, 1), got {level}")
    if sided not in _SIDES:
        raise DataError(f"sided must be one of {_SIDES}")
    q = (1.0 + level) / 2.0 if sided == "two" else level
    z = NormalDist().inv_cdf(q)

    def _pair(est, se):
        if sided == "lower":
            return est - z * se, math.inf
        if sided == "upper":
            return -math.inf, est + z * se
        return est - z * se, est + z * se

    d_lo, d_hi = _pair(fit.delta_total, report.se_delta)
    a = np.array([_pair(e, se) for e, se in zip(fit.alpha, report.se_alpha)])
    c = np.array([
        _pair(e, se) for e, se in zip(fit.consistency, report.se_consistency)
    ])
    return ConfidenceBounds(
        level=level,
        sided=sided,
        delta=(float(d_lo), float(d_hi)),
        alpha_lo=a[:, 0],
        alpha_hi=a[:, 1],
        consistency_lo=c[:, 0],
        consistency_hi=c[:, 1],
    )


def expected_cell_probabilities(fit: DeltaFit) -> np.ndarray:
    """Dense K**R array of fitted cell probabilities."""
    K = fit.summary.n_categories
    R = fit.summary.n_raters
    _check_dense_budget(K, R)
    probs = fit.pi[:, 0].copy()
    for r in range(1, R):
        probs = probs[..., None] * fit.pi[:, r]
    probs *= fit.B
    idx = tuple(np.arange(K) for _ in range(R))
    probs[idx] += fit.alpha
    return probs


def goodness_of_fit(fit: DeltaFit, table: JointCountTable) -> GofResult:
    """Pearson chi-square of the fitted mixture against the observed table.

    Cells with zero expected and zero observed probability are skipped;
    a zero expected with positive observed sets ``incompatible`` and an
    infinite statistic.  Sparse-cell counts (< 1 and <= 5 expected) gauge
    the reliability of the chi-square approximation.

    Raises
    ------
    SaturatedModelError
        When the residual degrees of freedom (K**R - 1) - K - R*(K - 1)
        are not positive.
    DataError
        When the table does not match the shape or total the fit used.
    """
    K, R = table.n_categories, table.n_raters
    if (K, R) != (fit.summary.n_categories, fit.summary.n_raters):
        raise DataError("fit and table have different shapes")
    n = table.total
    if not math.isclose(n, fit.summary.n, rel_tol=1e-9, abs_tol=1e-9):
        raise DataError(
            "fit and table totals differ; pass the same (possibly smoothed) "
            "table the fit was computed from"
        )
    df = (K**R - 1) - K - R * (K - 1)
    if df <= 0:
        raise SaturatedModelError(
            f"no residual degrees of freedom for K={K}, R={R}"
        )
    expected = expected_cell_probabilities(fit)
    observed = np.zeros_like(expected)
    for key, cnt in table.cells.items():
        observed[tuple(c - 1 for c in key)] = cnt / n

    counts = n * expected
    lt1 = int((counts < 1.0).sum())
    le5 = int((counts <= 5.0).sum())
    incompatible = bool(np.any((expected <= 0.0) & (observed > 0.0)))
    if incompatible:
        chi = math.inf
        p = 0.0
    else:
        mask = expected > 0.0
        chi = float(
            n * ((observed[mask] - expected[mask]) ** 2 / expected[mask]).sum()
        )
        p = chi_square_tail(chi, df)
    return GofResult(
        chi_square=chi,
        df=df,
        p_value=p,
        cells_expected_lt_1=lt1,
        cells_expected_le_5=le5,
        reliability_warning=le5 > 0,
        incompatible=incompatible,
    )


def chi_square_tail(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution.

    Evaluates the regularized upper incomplete gamma function Q(df/2, x/2)
    by power series or continued fraction; absolute error is far below the
    1e-10 contract across the practical range.
    """
    if df < 1:
        raise DataError(f"df must be at least 1, got {df}")
    if not x >= 0.0:
        raise DataError(f"the statistic must be nonnegative, got {x}")
    if math.isinf(x):
        return 0.0
    return min(1.0, max(0.0, _regularized_gamma_q(df / 2.0, x / 2.0)))


def _regularized_gamma_q(a: float, x: float) -> float:
    if x <= 0.0:
        return 1.0
    log_scale = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # lower series: P = x^a e^-x / Gamma(a) * sum x^k / (a (a+1) ... (a+k))
        term = 1.0 / a
        total = term
        k = a
        for _ in range(1000):
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return 1.0 - total * math.exp(log_scale)
    # modified Lentz continued fraction for Q
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(log_scale)
