"""Maximum-likelihood fit of the multi-rater agreement mixture.

The model splits every subject's profile into a recognition component
(with probability ``alpha_i`` all raters answer ``i``) and a residual
random component (with probability ``1 - Delta`` the raters answer
independently from per-rater distributions ``pi[:, r]``).  The overall
chance-corrected agreement is ``Delta = sum(alpha) = 1 - B``.

``fit_delta`` solves the stationarity system exactly: each admissible
assignment of per-category roots (a branch) is scanned for solutions of
the closure condition g(B) = 0, every solution found becomes a candidate,
and candidates are ranked by the profile log-likelihood

    f = -(R - 1) * D * log(B) + sum_{i,r: d>0} d[i,r] * log(lam_i + d[i,r]),

which is the data-dependent part of the multinomial log-likelihood at a
stationary point.  Boundary cases: perfect agreement returns the B = 0
fit directly, and a table with no admissible solution below the scan cap
is refitted once on the +0.5-smoothed table and flagged.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .data import AgreementSummary, smoothed_summary
from .errors import ShapeError, SolverError
from .solver import MAX_CANDIDATES, fit_kernel, scan_candidates

_F_TIE = 1e-10
_B_DEDUPE = 1e-9


@dataclass(frozen=True)
class FitDiagnostics:
    """How the winning solution was selected."""

    branch: tuple[str, ...]
    g_residual: float
    smoothing_applied: bool
    perfect_agreement: bool
    degenerate: bool
    n_candidates: int
    candidates: tuple[tuple[float, float], ...]  # (B, profile log-likelihood)


@dataclass(frozen=True)
class DeltaFit:
    """Fitted mixture: scale B, per-category splits, and random-response rows.

    ``alpha``, ``delta_total``, and ``consistency`` may be negative: negative
    agreement (systematic disagreement) is representable and reported as-is.
    ``consistency`` is NaN for categories no rater ever used.  ``summary``
    is the summary actually fitted, which is the smoothed one when
    ``diagnostics.smoothing_applied`` is set.
    """

    B: float
    lambdas: np.ndarray
    alpha: np.ndarray
    delta_total: float
    pi: np.ndarray
    consistency: np.ndarray
    I_pi: float
    diagnostics: FitDiagnostics
    summary: AgreementSummary

    def __post_init__(self):
        for name in ("lambdas", "alpha", "pi", "consistency"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def lambda_roots(B: float, d: Sequence[float]) -> tuple[float, ...]:
    """Nonnegative roots of prod(lam + d) = B**(R-1) * lam, ascending.

    Requires strictly positive disagreement components; categories with a
    zero component take lam = 0 and never reach this equation.  Returns an
    empty tuple when B is infeasible for the category, one value at a
    tangency, two otherwise.
    """
    d = np.ascontiguousarray(d, dtype=np.float64)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("d must be a vector with one entry per rater (R >= 2)")
    if np.any(d <= 0.0):
        raise ValueError("lambda_roots needs all-positive disagreements")
    if not B > 0.0:
        raise ValueError("B must be positive")
    from .solver import _roots_pair

    ok, lo, hi = _roots_pair(d, B ** (d.size - 1), B, True)
    if not ok:
        return ()
    if abs(hi - lo) <= 1e-12 * (1.0 + abs(hi)):
        return (0.5 * (lo + hi),)
    return (lo, hi)


def g_of_B(B: float, branch: Sequence[str], s: AgreementSummary) -> float:
    """Closure residual sum(lam_i(B)) - B + D for one branch choice.

    ``branch`` holds one of ``"zero"``, ``"low"``, ``"high"`` per category;
    ``"zero"`` is required exactly for categories where some rater never
    disagrees.  Returns NaN when the branch has no root at this B or an
    implied response probability falls outside [0, 1].
    """
    if not B > 0.0:
        raise ValueError("B must be positive")
    if len(branch) != s.n_categories:
        raise ValueError("branch needs one entry per category")
    total = 0.0
    worst = 0.0  # largest implied numerator lam_i + d[i, r]
    for i, choice in enumerate(branch):
        has_zero = bool(np.any(s.d[i] <= 0.0))
        if choice == "zero":
            if not has_zero:
                raise ValueError(f"category {i + 1} has all-positive disagreements")
            worst = max(worst, float(s.d[i].max()))
            continue
        if has_zero:
            raise ValueError(f"category {i + 1} requires the 'zero' branch")
        roots = lambda_roots(B, s.d[i])
        if not roots:
            return math.nan
        if choice == "low":
            lam = roots[0]
        elif choice == "high":
            lam = roots[-1]
        else:
            raise ValueError(f"unknown branch choice {choice!r}")
        total += lam
        worst = max(worst, lam + float(s.d[i].max()))
    # any implied response probability above 1 marks the point infeasible
    if worst > B * (1.0 + 1e-9):
        return math.nan
    return total - B + float(s.D_total)


def profile_log_likelihood(candidate: tuple[float, Sequence[float]],
                           s: AgreementSummary) -> float:
    """Branch-ranking objective f for a stationary candidate (B, lambdas)."""
    B, lambdas = candidate
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if s.D_total <= 1e-12:
        return 0.0
    if not B > 0.0 or lambdas.shape != (s.n_categories,) or np.any(lambdas < 0.0):
        raise ValueError("infeasible candidate")
    if np.any((lambdas > 0.0) & np.any(s.d <= 0.0, axis=1)):
        raise ValueError("categories with a zero disagreement must have lambda 0")
    return _profile_f(B, lambdas, s.d, float(s.D_total))


def _profile_f(B: float, lambdas: np.ndarray, d: np.ndarray, d_total: float) -> float:
    R = d.shape[1]
    mask = d > 0.0
    shifted = lambdas[:, None] + d
    return float(
        -(R - 1) * d_total * math.log(B)
        + (d[mask] * np.log(shifted[mask])).sum()
    )


def _rank(b: np.ndarray, lam: np.ndarray, bits: np.ndarray,
          d: np.ndarray, d_total: float):
    """Dedupe candidates by B, rank by f with smaller-B tie-breaking."""
    order = np.argsort(b)
    kept: list[int] = []
    for j in order:
        if kept and abs(b[j] - b[kept[-1]]) <= _B_DEDUPE * (1.0 + b[j]):
            continue
        kept.append(j)
    scored = [
        (float(b[j]), lam[j], int(bits[j]),
         _profile_f(float(b[j]), lam[j], d, d_total))
        for j in kept
    ]
    best = 0
    for k in range(1, len(scored)):
        if scored[k][3] > scored[best][3] + _F_TIE:
            best = k
    return scored, best


def _perfect_fit(s: AgreementSummary, smoothing_applied: bool) -> DeltaFit:
    K, R = s.n_categories, s.n_raters
    p = s.p_agree
    pi = np.repeat(p[:, None], R, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        consistency = np.where(s.N_cat > 0, R * p / np.where(s.N_cat > 0, s.N_cat, 1.0),
                               np.nan)
    diag = FitDiagnostics(
        branch=("zero",) * K,
        g_residual=0.0,
        smoothing_applied=smoothing_applied,
        perfect_agreement=True,
        degenerate=False,
        n_candidates=1,
        candidates=((0.0, 0.0),),
    )
    return DeltaFit(
        B=0.0,
        lambdas=np.zeros(K),
        alpha=p.copy(),
        delta_total=1.0,
        pi=pi,
        consistency=consistency,
        I_pi=float((p**R).sum()),
        diagnostics=diag,
        summary=s,
    )


def _assemble(s: AgreementSummary, B: float, lambdas: np.ndarray, bits: int,
              scored, best: int, smoothing_applied: bool,
              degenerate: bool) -> DeltaFit:
    K, R = s.n_categories, s.n_raters
    alpha = s.p_agree - lambdas
    pi = (lambdas[:, None] + s.d) / B
    branch = []
    j = 0
    for i in range(K):
        if np.any(s.d[i] <= 0.0):
            branch.append("zero")
        else:
            branch.append("high" if (bits >> j) & 1 else "low")
            j += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        consistency = np.where(
            s.N_cat > 0, R * alpha / np.where(s.N_cat > 0, s.N_cat, 1.0), np.nan
        )
    g_res = float(lambdas.sum() - B + s.D_total)
    diag = FitDiagnostics(
        branch=tuple(branch),
        g_residual=g_res,
        smoothing_applied=smoothing_applied,
        perfect_agreement=False,
        degenerate=degenerate,
        n_candidates=len(scored),
        candidates=tuple((bb, ff) for bb, _, _, ff in scored),
    )
    return DeltaFit(
        B=B,
        lambdas=lambdas,
        alpha=alpha,
        delta_total=1.0 - B,
        pi=pi,
        consistency=consistency,
        I_pi=float(pi.prod(axis=1).sum()),
        diagnostics=diag,
        summary=s,
    )


def fit_delta(
    s: AgreementSummary,
    *,
    grid_points: int = 512,
    b_cap: float = 1e3,
    allow_smoothing: bool = True,
) -> DeltaFit:
    """Likelihood-maximizing mixture fit for K > 2 or R > 2.

    Parameters
    ----------
    s
        Agreement summary of the observed table.
    grid_points, b_cap
        Geometric scan grid for the closure condition; the defaults locate
        every solution of the worked reference tables to full precision.
    allow_smoothing
        When no admissible solution exists below ``b_cap`` (the degenerate
        boundary), refit once on the +0.5-smoothed summary and flag the
        result instead of failing.

    Raises
    ------
    ShapeError
        For 2x2 input, which is under-identified here; use
        ``concordia.binary.fit_binary``.
    SolverError
        When no solution exists even after the smoothing rescue.
    """
    if s.n_categories == 2 and s.n_raters == 2:
        raise ShapeError(
            "the 2-category 2-rater design is under-identified in the general "
            "model; use concordia.binary.fit_binary"
        )
    return _fit_summary(s, grid_points, b_cap, allow_smoothing, False)


def _fit_summary(s: AgreementSummary, grid_points: int, b_cap: float,
                 allow_smoothing: bool, already_smoothed: bool) -> DeltaFit:
    if s.D_total <= 1e-12:
        return _perfect_fit(s, already_smoothed)
    b, lam, bits = scan_candidates(
        s.d, float(s.D_total), grid_points=grid_points, b_cap=b_cap
    )
    if b.size == 0:
        if allow_smoothing and not already_smoothed:
            fit = _fit_summary(smoothed_summary(s), grid_points, b_cap,
                               False, True)
            diag = fit.diagnostics
            return DeltaFit(
                B=fit.B, lambdas=fit.lambdas, alpha=fit.alpha,
                delta_total=fit.delta_total, pi=fit.pi,
                consistency=fit.consistency, I_pi=fit.I_pi,
                diagnostics=FitDiagnostics(
                    branch=diag.branch, g_residual=diag.g_residual,
                    smoothing_applied=True, perfect_agreement=diag.perfect_agreement,
                    degenerate=True, n_candidates=diag.n_candidates,
                    candidates=diag.candidates,
                ),
                summary=fit.summary,
            )
        raise SolverError(
            "no admissible solution below the scan cap (degenerate table)",
            diagnostics={"b_cap": b_cap, "smoothed": already_smoothed},
        )
    scored, best = _rank(b, lam, bits, s.d, float(s.D_total))
    B, lambdas, win_bits, _f = scored[best]
    return _assemble(s, B, lambdas, win_bits, scored, best, already_smoothed, False)


def consistencies(fit: DeltaFit, s: AgreementSummary) -> np.ndarray:
    """Per-category chance-corrected agreement R*alpha/N, NaN when N = 0.

    Cross-checks the equivalent form R*alpha / (R*alpha + B*sum(pi_row))
    to 1e-9 as an internal consistency guard.
    """
    R = s.n_raters
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s.N_cat > 0, R * fit.alpha / np.where(s.N_cat > 0, s.N_cat, 1.0),
                       np.nan)
        denom2 = R * fit.alpha + fit.B * fit.pi.sum(axis=1)
        alt = np.where(s.N_cat > 0, R * fit.alpha / np.where(denom2 != 0, denom2, 1.0),
                       np.nan)
    defined = s.N_cat > 1e-12
    if np.any(np.abs(out[defined] - alt[defined]) > 1e-9):
        raise SolverError("internal inconsistency between the two consistency forms")
    return out


def fit_core(p_agree: np.ndarray, d: np.ndarray, *, grid_points: int = 512,
             b_cap: float = 1e3,
             _work: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
             ) -> tuple[float, np.ndarray] | None:
    """Lean fitting path for resampling loops: (B, lambdas) or None.

    Skips summary validation and smoothing; degenerate replicates return
    None so the caller can count them.  ``_work`` lets tight loops reuse
    the kernel's output buffers.
    """
    d_total = float(1.0 - p_agree.sum())
    if d_total <= 1e-12:
        return 0.0, np.zeros(p_agree.size)
    K = p_agree.size
    if _work is None:
        _work = _make_work(K)
    out_b, out_lam, out_bits = _work
    status, B, best = fit_kernel(
        np.ascontiguousarray(p_agree, dtype=np.float64),
        np.ascontiguousarray(d, dtype=np.float64),
        d_total, int(grid_points), float(b_cap), out_b, out_lam, out_bits,
    )
    if status == 0:
        return None
    if status < 0:
        raise SolverError("candidate overflow in the resampling fit path")
    return B, out_lam[best].copy()


def _make_work(K: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.empty(MAX_CANDIDATES),
        np.empty((MAX_CANDIDATES, K)),
        np.empty(MAX_CANDIDATES, dtype=np.int64),
    )
