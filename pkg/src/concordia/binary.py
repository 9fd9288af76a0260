"""The two-rater, two-category special case.

A 2x2 table leaves the general mixture under-identified (four parameters,
three free cells), so the fit goes through a dummy third category: the
table is embedded in a 3x3 grid with zero counts outside the original
block, every cell gains 0.5, and the general model is fitted to that.
The agreement measures are then rescaled to refer to the real categories
only, dividing by the probability mass the first rater leaves outside the
dummy category.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import AgreementSummary, JointCountTable, summarize
from .delta import DeltaFit, fit_delta
from .errors import ShapeError, SingularVarianceError, SolverError
from .inference import _category_x

_SYM_TOL = 1e-6


@dataclass(frozen=True)
class BinaryDeltaFit:
    """Rescaled agreement measures for a 2x2 table.

    ``alpha_star``, ``delta_star``, and ``consistency_star`` refer to the
    two real categories; ``inner`` is the full fit of the augmented,
    smoothed 3x3 table it was derived from.  ``dummy_row_mass`` is the
    first rater's marginal on the dummy category and ``x3`` its closed-form
    information term, pinned by the symmetry of the augmented table.
    """

    alpha_star: np.ndarray
    delta_star: float
    consistency_star: np.ndarray
    se_alpha_star: np.ndarray
    se_delta_star: float
    se_consistency_star: np.ndarray
    inner: DeltaFit
    dummy_row_mass: float
    x3: float
    warnings: tuple[str, ...] = ()


def augment_2x2(table: JointCountTable) -> JointCountTable:
    """Embed a 2x2 table into a 3x3 grid and add 0.5 to all nine cells.

    The dummy row and column start at zero, so the new total is the old
    one plus 4.5.  The two steps are combined because the fit always
    requires both.
    """
    if table.n_categories != 2 or table.n_raters != 2:
        raise ShapeError("augment_2x2 expects a 2-category, 2-rater table")
    cells = {
        (i, j): table.count((i, j)) + 0.5 for i in (1, 2, 3) for j in (1, 2, 3)
    }
    return JointCountTable(3, 2, cells)


def fit_binary(table: JointCountTable, *, grid_points: int = 512,
               b_cap: float = 1e3) -> BinaryDeltaFit:
    """Fit the mixture to a 2x2 table via the dummy-category embedding.

    Everything (fit and variances) is computed on the augmented table with
    its smoothed total; see ``BinaryDeltaFit`` for how the results map
    back to the two real categories.
    """
    if table.n_categories != 2 or table.n_raters != 2:
        raise ShapeError("fit_binary expects a 2-category, 2-rater table")
    augmented = augment_2x2(table)
    s = summarize(augmented)
    inner = fit_delta(s, grid_points=grid_points, b_cap=b_cap,
                      allow_smoothing=False)
    pi = inner.pi
    sym = max(
        abs(pi[0, 0] - pi[1, 1]),
        abs(pi[0, 1] - pi[1, 0]),
        abs(pi[2, 0] - pi[2, 1]),
    )
    if sym > _SYM_TOL:
        raise SolverError(
            f"augmented fit broke the dummy-category symmetry by {sym:.2e}"
        )
    return _starred(inner, s)


def _starred(inner: DeltaFit, s: AgreementSummary) -> BinaryDeltaFit:
    warnings: list[str] = []
    n = s.n
    scale = 1.0 - s.t[2, 0]  # mass the first rater puts on real categories
    alpha = inner.alpha
    delta = inner.delta_total
    pi = inner.pi
    alpha_star = alpha[:2] / scale
    delta_star = float(alpha_star.sum())
    n_cat = s.N_cat[:2]
    consistency_star = 2.0 * alpha[:2] / n_cat

    x_cat = _category_x(pi)
    pi3 = pi[2, 0]
    if abs(2.0 * pi3 - 1.0) < 1e-12:
        raise SingularVarianceError("dummy-category response probability at 1/2")
    x3 = pi3**2 / (2.0 * pi3 - 1.0)
    x_tot = float(x_cat[0] + x_cat[1] + x3)
    if abs(x_tot - 1.0) < 1e-12:
        raise SingularVarianceError("X - 1 vanished at this fit")

    base = (1.0 - delta) * x_cat[:2] * (x_cat[:2] / (x_tot - 1.0) - 1.0)
    v_alpha_star = (base + scale * alpha_star * (1.0 - alpha_star)) / (n * scale**2)
    v_delta_star = (
        (1.0 - delta) * (1.0 - x3) * (x_tot - x3) / (x_tot - 1.0)
        + scale * delta_star * (1.0 - delta_star)
    ) / (n * scale**2)
    v_cons_star = (4.0 / (n * n_cat**2)) * (
        base
        + alpha[:2] * (
            1.0
            - 3.0 * alpha[:2] / n_cat
            + 2.0 * alpha[:2] ** 2 / n_cat**2
            + 2.0 * pi[:2, 0] * pi[:2, 1] * (1.0 - delta) * alpha[:2] / n_cat**2
        )
    )

    def _se(v, label):
        v = np.asarray(v, dtype=float)
        neg = v < 0
        if np.any(neg):
            warnings.append(f"negative variance for {label}; its SE is reported as NaN")
        return np.where(neg, np.nan, np.sqrt(np.where(neg, 0.0, v)))

    se_alpha_star = _se(v_alpha_star, "alpha_star")
    se_cons_star = _se(v_cons_star, "consistency_star")
    se_delta_star = float(_se(np.array([v_delta_star]), "delta_star")[0])
    return BinaryDeltaFit(
        alpha_star=alpha_star,
        delta_star=delta_star,
        consistency_star=consistency_star,
        se_alpha_star=se_alpha_star,
        se_delta_star=se_delta_star,
        se_consistency_star=se_cons_star,
        inner=inner,
        dummy_row_mass=float(s.t[2, 0]),
        x3=float(x3),
        warnings=tuple(warnings),
    )


def binary_core(counts: np.ndarray, *, grid_points: int = 512,
                b_cap: float = 1e3) -> tuple[float, np.ndarray, np.ndarray] | None:
    """Lean refit path for resampling: 2x2 counts to starred measures.

    Returns (delta_star, alpha_star, consistency_star) or None when the
    augmented fit is degenerate.  The augmented summary is built
    analytically rather than through table objects.
    """
    from .delta import fit_core

    a, b = float(counts[0, 0]), float(counts[0, 1])
    c, d = float(counts[1, 0]), float(counts[1, 1])
    n = a + b + c + d + 4.5
    p = np.array([a + 0.5, d + 0.5, 0.5]) / n
    t1 = np.array([a + b + 1.5, c + d + 1.5, 1.5]) / n
    t2 = np.array([a + c + 1.5, b + d + 1.5, 1.5]) / n
    dis = np.column_stack([t1, t2]) - p[:, None]
    res = fit_core(p, dis, grid_points=grid_points, b_cap=b_cap)
    if res is None:
        return None
    B, lam = res
    alpha = p - lam
    scale = 1.0 - t1[2]
    n_cat = 2.0 * p[:2] + dis[:2].sum(axis=1)
    return float(alpha[0] / scale + alpha[1] / scale), alpha[:2] / scale, \
        2.0 * alpha[:2] / n_cat
