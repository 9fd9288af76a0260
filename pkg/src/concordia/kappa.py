"""Raw agreement and the kappa family of chance-corrected coefficients.

Four flavours are provided: Cohen's kappa (two raters), Fleiss' kappa,
and Hubert's two multi-rater generalizations (R-wise, where an agreement
requires all raters to coincide, and pairwise, where every concordant
rater pair counts).  All share the form ``(I_o - I_e) / (1 - I_e)`` with
an observed index ``I_o`` and an expected-under-independence index
``I_e``; they differ in how those indices are defined.

Degenerate denominators yield a typed "undefined" result rather than NaN.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .data import AgreementSummary, JointCountTable, collapse_category, summarize
from .errors import DataError, ShapeError

KINDS = ("raw", "cohen", "fleiss", "hubert_r_wise", "hubert_pairwise")

_DEGENERATE = "undefined: degenerate marginals"


@dataclass(frozen=True)
class KappaResult:
    """One agreement coefficient with its building blocks.

    ``value`` is None exactly when the coefficient is undefined for the
    data (chance index equal to 1, or a vanishing denominator), in which
    case ``undefined_reason`` says why.
    """

    kind: str
    value: float | None
    observed_index: float | None = None
    expected_index: float | None = None
    components: Mapping[str, float] = field(default_factory=dict)
    undefined_reason: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", MappingProxyType(dict(self.components)))

    @property
    def defined(self) -> bool:
        return self.value is not None


def _ratio(kind: str, i_o: float, i_e: float, components: dict[str, float]) -> KappaResult:
    if abs(1.0 - i_e) < 1e-14:
        return KappaResult(kind, None, i_o, i_e, components, _DEGENERATE)
    return KappaResult(kind, (i_o - i_e) / (1.0 - i_e), i_o, i_e, components)


def raw_agreement(s: AgreementSummary) -> KappaResult:
    """Proportion of subjects on which every rater gave the same category."""
    return KappaResult("raw", float(s.p_total), observed_index=float(s.p_total))


def cohen_kappa(s: AgreementSummary) -> KappaResult:
    """Cohen's kappa for exactly two raters.

    Observed index: total diagonal proportion.  Expected index: the
    diagonal of the product of the two raters' marginal distributions.
    """
    if s.n_raters != 2:
        raise ShapeError(f"Cohen's kappa requires exactly 2 raters, got {s.n_raters}")
    i_o = float(s.p_total)
    i_e = float((s.t[:, 0] * s.t[:, 1]).sum())
    return _ratio("cohen", i_o, i_e, {})


def hubert_r_wise_kappa(s: AgreementSummary) -> KappaResult:
    """Hubert's kappa with the all-raters-coincide notion of agreement.

    Reduces to Cohen's kappa when R = 2.  The expected index is the chance
    probability that all R raters independently pick the same category.
    """
    i_o = float(s.p_total)
    i_e = float(s.t.prod(axis=1).sum())
    n = s.n
    comps = {
        "observed_agreements": i_o * n,
        "max_agreements": n,
        "expected_agreements": i_e * n,
    }
    return _ratio("hubert_r_wise", i_o, i_e, comps)


def _sum_sq_rater_counts(s: AgreementSummary) -> float:
    # sum over subjects and categories of (raters answering i)^2,
    # computed from the usage histogram
    hist = s.rater_count_histogram
    if hist is None:
        raise DataError("this summary has no rater-count histogram (needed here)")
    omegas = np.arange(s.n_raters + 1, dtype=float)
    return float((hist * omegas**2).sum())


def fleiss_kappa(s: AgreementSummary) -> KappaResult:
    """Fleiss' kappa, the pairwise coefficient with pooled-margin chance.

    Not an extension of Cohen's kappa: at R = 2 the chance index uses the
    average of the two raters' margins, so the values differ.
    """
    R, n = s.n_raters, s.n
    ssq = _sum_sq_rater_counts(s)
    pooled = s.R_dot / (n * R)
    i_o = (ssq - n * R) / (n * R * (R - 1))
    i_e = float(pooled @ pooled)
    comps = {"sum_sq_rater_counts": ssq, "sum_sq_pooled_margins": i_e}
    return _ratio("fleiss", i_o, i_e, comps)


def hubert_pairwise_kappa(s: AgreementSummary) -> KappaResult:
    """Hubert's kappa with pairwise agreement and per-rater-pair chance."""
    R, n = s.n_raters, s.n
    ssq = _sum_sq_rater_counts(s)
    cross = 0.0
    for r in range(R):
        for r2 in range(r + 1, R):
            cross += float(s.t[:, r] @ s.t[:, r2])
    pairs = R * (R - 1) / 2.0
    i_o = (ssq - n * R) / (2.0 * n) / pairs
    i_e = cross / pairs
    comps = {"sum_sq_rater_counts": ssq, "cross_margin_sum": cross}
    return _ratio("hubert_pairwise", i_o, i_e, comps)


def per_category_kappa(table: JointCountTable, category: int, kind: str) -> KappaResult:
    """Kappa of the table collapsed to ``category`` versus everything else.

    ``kind`` is ``"cohen"`` (two raters only) or ``"hubert_r_wise"``.
    """
    collapsed = summarize(collapse_category(table, category))
    if kind == "cohen":
        return cohen_kappa(collapsed)
    if kind == "hubert_r_wise":
        return hubert_r_wise_kappa(collapsed)
    raise DataError(f"unsupported collapsed-kappa kind {kind!r}")


def kappa_by_kind(s: AgreementSummary, kind: str) -> KappaResult:
    """Dispatch a coefficient by name."""
    table = {
        "raw": raw_agreement,
        "cohen": cohen_kappa,
        "fleiss": fleiss_kappa,
        "hubert_r_wise": hubert_r_wise_kappa,
        "hubert_pairwise": hubert_pairwise_kappa,
    }
    if kind not in table:
        raise DataError(f"unknown coefficient {kind!r}; expected one of {', '.join(KINDS)}")
    return table[kind](s)
