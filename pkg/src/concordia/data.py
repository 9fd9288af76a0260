"""Rating data model and its reduction to agreement sufficient statistics.

The pipeline is ``records -> RatingMatrix -> JointCountTable ->
AgreementSummary``.  Every estimator in the package consumes either the
joint table (goodness of fit, resampling) or the summary (everything else),
so the reduction here is the single source of truth for the observed
proportions.

Categories and raters are identified by 1-based indices throughout the
public API, matching the on-disk count format.
"""

from __future__ import annotations

import itertools
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .errors import DataError, ShapeError, TableTooLargeError

DEFAULT_MAX_CELLS = 10_000_000

_REL = 1e-9


def max_dense_cells() -> int:
    """Cell budget for operations that enumerate all K**R dense cells.

    Overridden by the ``CONCORDIA_MAX_CELLS`` environment variable.
    """
    raw = os.environ.get("CONCORDIA_MAX_CELLS", "")
    return int(raw) if raw.strip() else DEFAULT_MAX_CELLS


def _check_dense_budget(n_categories: int, n_raters: int) -> int:
    cells = n_categories**n_raters
    budget = max_dense_cells()
    if cells > budget:
        raise TableTooLargeError(
            f"operation needs {cells} dense cells, over the budget of {budget} "
            f"(set CONCORDIA_MAX_CELLS to raise it)"
        )
    return cells


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RatingMatrix:
    """Complete n_subjects x n_raters table of category assignments.

    ``labels[s, r]`` is the 1-based category index that rater ``r + 1``
    assigned to subject ``s + 1``.  Every cell must be filled: designs with
    missing ratings or varying rater panels are out of scope.
    """

    labels: np.ndarray
    n_categories: int
    category_names: tuple[str, ...] | None = None
    rater_names: tuple[str, ...] | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise DataError("labels must be a 2-D subjects x raters array")
        n, r = labels.shape
        if n < 1:
            raise DataError("at least one subject is required")
        if r < 2:
            raise DataError(f"at least 2 raters are required, got {r}")
        if self.n_categories < 2:
            raise DataError(f"at least 2 categories are required, got {self.n_categories}")
        if labels.size and (labels.min() < 1 or labels.max() > self.n_categories):
            raise DataError("category labels must lie in 1..n_categories")
        if self.category_names is not None and len(self.category_names) != self.n_categories:
            raise DataError("category_names length does not match n_categories")
        if self.rater_names is not None and len(self.rater_names) != r:
            raise DataError("rater_names length does not match the rater count")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n_subjects(self) -> int:
        return self.labels.shape[0]

    @property
    def n_raters(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class JointCountTable:
    """Sparse multinomial cell counts over rating profiles.

    ``cells`` maps an R-tuple of 1-based category indices to a nonnegative
    (possibly fractional, after smoothing) count.  Zero-count cells are
    dropped; ``total`` is validated against the stored counts.
    """

    n_categories: int
    n_raters: int
    cells: Mapping[tuple[int, ...], float]
    total: float = field(default=math.nan)

    def __post_init__(self):
        if self.n_categories < 2:
            raise DataError("a joint table needs at least 2 categories")
        if self.n_raters < 2:
            raise DataError("a joint table needs at least 2 raters")
        clean: dict[tuple[int, ...], float] = {}
        for key, cnt in self.cells.items():
            key = tuple(int(c) for c in key)
            if len(key) != self.n_raters:
                raise DataError(f"cell {key} does not have one index per rater")
            if any(c < 1 or c > self.n_categories for c in key):
                raise DataError(f"cell {key} has a category index outside 1..K")
            cnt = float(cnt)
            if not math.isfinite(cnt) or cnt < 0:
                raise DataError(f"cell {key} has an invalid count {cnt}")
            if cnt > 0:
                clean[key] = clean.get(key, 0.0) + cnt
        total = sum(clean.values())
        if total <= 0:
            raise DataError("a joint table must contain a positive total count")
        declared = self.total
        if not math.isnan(declared) and not math.isclose(declared, total, rel_tol=_REL):
            raise DataError(f"declared total {declared} does not match cell sum {total}")
        object.__setattr__(self, "cells", MappingProxyType(clean))
        object.__setattr__(self, "total", total)

    def count(self, key: tuple[int, ...]) -> float:
        return self.cells.get(tuple(key), 0.0)


@dataclass(frozen=True)
class AgreementSummary:
    """Sufficient statistics for every agreement estimator in the package.

    Per category ``i`` (0-based array row ``i - 1``) and rater ``r``:

    * ``p_agree[i]``: proportion of subjects rated ``i`` unanimously.
    * ``t[i, r]``: marginal proportion of responses ``i`` by rater ``r``.
    * ``d[i, r] = t[i, r] - p_agree[i]``: rater r's disagreement proportion.
    * ``D_cat[i]``: total disagreement in the category, ``d[i, :].sum()``.
    * ``N_cat[i] = R * p_agree[i] + D_cat[i]``: responses ``i`` weighted by
      how many raters used them.

    ``rater_count_histogram[i, w]`` counts subjects for which exactly ``w``
    raters answered ``i``; it is only populated when the summary came from a
    full joint table (pairwise-style estimators need it, the mixture-model
    fit does not).
    """

    n_categories: int
    n_raters: int
    n: float
    p_agree: np.ndarray
    t: np.ndarray
    d: np.ndarray
    p_total: float
    D_total: float
    D_cat: np.ndarray
    N_cat: np.ndarray
    rater_count_histogram: np.ndarray | None = None
    R_dot: np.ndarray | None = None

    def __post_init__(self):
        K, R = self.n_categories, self.n_raters
        p = _readonly(self.p_agree)
        t = _readonly(self.t)
        d = _readonly(self.d)
        if p.shape != (K,) or t.shape != (K, R) or d.shape != (K, R):
            raise DataError("summary array shapes do not match K and R")
        if np.any(p < -_REL) or np.any(d < -_REL):
            raise DataError("agreement and disagreement proportions must be nonnegative")
        if not np.allclose(t, p[:, None] + d, rtol=0, atol=_REL):
            raise DataError("marginals must equal agreement plus disagreement proportions")
        if not np.allclose(t.sum(axis=0), 1.0, rtol=0, atol=_REL):
            raise DataError("each rater's marginal proportions must sum to 1")
        if not math.isclose(self.p_total + self.D_total, 1.0, abs_tol=_REL):
            raise DataError("total agreement and disagreement must sum to 1")
        object.__setattr__(self, "p_agree", p)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "D_cat", _readonly(self.D_cat))
        object.__setattr__(self, "N_cat", _readonly(self.N_cat))
        if self.rater_count_histogram is not None:
            hist = _readonly(self.rater_count_histogram)
            rdot = _readonly(self.R_dot)
            if hist.shape != (K, R + 1):
                raise DataError("rater-count histogram must have shape (K, R + 1)")
            omegas = np.arange(R + 1, dtype=float)
            if not np.allclose(hist @ omegas, rdot, rtol=_REL, atol=_REL):
                raise DataError("histogram and total-response counts are inconsistent")
            if not math.isclose(rdot.sum(), self.n * R, rel_tol=_REL):
                raise DataError("total responses must equal n * R")
            object.__setattr__(self, "rater_count_histogram", hist)
            object.__setattr__(self, "R_dot", rdot)


def ingest_long(
    records: Iterable[tuple[object, object, object]],
    *,
    category_order: Sequence[object] | None = None,
    rater_order: Sequence[object] | None = None,
) -> RatingMatrix:
    """Build a RatingMatrix from (subject, rater, category) records.

    Subjects, raters, and categories are indexed by first appearance unless
    an explicit ordering is supplied, so the result is deterministic for a
    given record sequence.

    Raises
    ------
    DataError
        On a duplicated (subject, rater) pair, an incomplete design (some
        subject missing a rating from some rater), fewer than 2 raters or
        categories, or a label outside a supplied ordering.
    """
    subj_idx: dict[object, int] = {}
    rater_idx: dict[object, int] = {}
    cat_idx: dict[object, int] = {}
    if rater_order is not None:
        rater_idx = {r: k for k, r in enumerate(rater_order)}
        if len(rater_idx) != len(rater_order):
            raise DataError("rater_order contains duplicates")
    if category_order is not None:
        cat_idx = {c: k for k, c in enumerate(category_order)}
        if len(cat_idx) != len(category_order):
            raise DataError("category_order contains duplicates")

    triples: dict[tuple[int, int], int] = {}
    for subject, rater, category in records:
        s = subj_idx.setdefault(subject, len(subj_idx))
        if rater not in rater_idx:
            if rater_order is not None:
                raise DataError(f"rater {rater!r} not in the declared rater order")
            rater_idx[rater] = len(rater_idx)
        if category not in cat_idx:
            if category_order is not None:
                raise DataError(f"category {category!r} not in the declared category order")
            cat_idx[category] = len(cat_idx)
        key = (s, rater_idx[rater])
        if key in triples:
            raise DataError(f"duplicate rating for subject {subject!r} by rater {rater!r}")
        triples[key] = cat_idx[category]

    n, n_raters, n_cats = len(subj_idx), len(rater_idx), len(cat_idx)
    if n < 1:
        raise DataError("no records supplied")
    if n_raters < 2:
        raise DataError(f"at least 2 raters are required, got {n_raters}")
    if n_cats < 2:
        raise DataError(f"at least 2 categories are required, got {n_cats}")
    if len(triples) != n * n_raters:
        missing = n * n_raters - len(triples)
        raise DataError(f"incomplete design: {missing} (subject, rater) cells have no rating")

    labels = np.empty((n, n_raters), dtype=np.int64)
    for (s, r), c in triples.items():
        labels[s, r] = c + 1
    names = [str(c) for c in cat_idx]
    raters = [str(r) for r in rater_idx]
    return RatingMatrix(labels, n_cats, tuple(names), tuple(raters))


def joint_counts(m: RatingMatrix) -> JointCountTable:
    """Tabulate the rating profiles of a matrix into sparse joint counts."""
    cells: dict[tuple[int, ...], float] = {}
    for row in m.labels:
        key = tuple(int(c) for c in row)
        cells[key] = cells.get(key, 0.0) + 1.0
    return JointCountTable(m.n_categories, m.n_raters, cells)


def summarize(table: JointCountTable) -> AgreementSummary:
    """Reduce a joint table to the agreement sufficient statistics.

    The rater-count histogram comes directly from the cell profiles: a cell
    whose tuple uses category ``i`` exactly ``w`` times contributes its count
    to ``histogram[i, w]``.
    """
    K, R = table.n_categories, table.n_raters
    n = table.total
    p = np.zeros(K)
    t = np.zeros((K, R))
    hist = np.zeros((K, R + 1))
    for key, cnt in table.cells.items():
        if len(set(key)) == 1:
            p[key[0] - 1] += cnt
        uses = np.zeros(K, dtype=np.int64)
        for r, c in enumerate(key):
            t[c - 1, r] += cnt
            uses[c - 1] += 1
        for i in range(K):
            if uses[i]:
                hist[i, uses[i]] += cnt
    hist[:, 0] = n - hist[:, 1:].sum(axis=1)
    p /= n
    t /= n
    d = t - p[:, None]
    np.clip(d, 0.0, None, out=d)  # guard roundoff on exact-agreement rows
    D_cat = d.sum(axis=1)
    omegas = np.arange(R + 1, dtype=float)
    return AgreementSummary(
        n_categories=K,
        n_raters=R,
        n=n,
        p_agree=p,
        t=t,
        d=d,
        p_total=float(p.sum()),
        D_total=float(1.0 - p.sum()),
        D_cat=D_cat,
        N_cat=R * p + D_cat,
        rater_count_histogram=hist,
        R_dot=hist @ omegas,
    )


def collapse_category(table: JointCountTable, category: int) -> JointCountTable:
    """Collapse to two categories: 1 = ``category``, 2 = everything else."""
    if not 1 <= category <= table.n_categories:
        raise DataError(f"category {category} outside 1..{table.n_categories}")
    cells: dict[tuple[int, ...], float] = {}
    for key, cnt in table.cells.items():
        new = tuple(1 if c == category else 2 for c in key)
        cells[new] = cells.get(new, 0.0) + cnt
    return JointCountTable(2, table.n_raters, cells)


def drop_rater(table: JointCountTable, rater: int) -> JointCountTable:
    """Marginalize the joint table over one rater (1-based index)."""
    if table.n_raters < 3:
        raise ShapeError("cannot drop a rater from a 2-rater table")
    if not 1 <= rater <= table.n_raters:
        raise DataError(f"rater {rater} outside 1..{table.n_raters}")
    r0 = rater - 1
    cells: dict[tuple[int, ...], float] = {}
    for key, cnt in table.cells.items():
        new = key[:r0] + key[r0 + 1:]
        cells[new] = cells.get(new, 0.0) + cnt
    return JointCountTable(table.n_categories, table.n_raters - 1, cells)


def smooth(table: JointCountTable, increment: float = 0.5) -> JointCountTable:
    """Add ``increment`` to every dense cell, structural zeros included.

    The total grows by exactly ``increment * K**R``; used to move estimates
    off the boundary of the parameter space before variance estimation.
    """
    if not increment > 0:
        raise DataError(f"smoothing increment must be positive, got {increment}")
    K, R = table.n_categories, table.n_raters
    _check_dense_budget(K, R)
    cells = {
        key: table.count(key) + increment
        for key in itertools.product(range(1, K + 1), repeat=R)
    }
    return JointCountTable(K, R, cells)


def smoothed_summary(s: AgreementSummary, increment: float = 0.5) -> AgreementSummary:
    """Summary of the smoothed table, derived without materializing it.

    Adding ``increment`` to all K**R cells shifts each unanimous cell by
    ``increment``, each rater marginal by ``increment * K**(R-1)``, and the
    rater-count histogram by the number of profiles with each usage count.
    Agrees exactly with ``summarize(smooth(table))``.
    """
    if not increment > 0:
        raise DataError(f"smoothing increment must be positive, got {increment}")
    K, R = s.n_categories, s.n_raters
    n2 = s.n + increment * K**R
    p2 = (s.n * s.p_agree + increment) / n2
    t2 = (s.n * s.t + increment * K ** (R - 1)) / n2
    d2 = t2 - p2[:, None]
    D_cat = d2.sum(axis=1)
    hist2 = None
    rdot2 = None
    if s.rater_count_histogram is not None:
        # profiles using a fixed category exactly w times: C(R, w)*(K-1)**(R-w)
        shifts = np.array(
            [math.comb(R, w) * (K - 1) ** (R - w) for w in range(R + 1)], dtype=float
        )
        hist2 = s.rater_count_histogram + increment * shifts
        rdot2 = hist2 @ np.arange(R + 1, dtype=float)
    return AgreementSummary(
        n_categories=K,
        n_raters=R,
        n=n2,
        p_agree=p2,
        t=t2,
        d=d2,
        p_total=float(p2.sum()),
        D_total=float(1.0 - p2.sum()),
        D_cat=D_cat,
        N_cat=R * p2 + D_cat,
        rater_count_histogram=hist2,
        R_dot=rdot2,
    )
