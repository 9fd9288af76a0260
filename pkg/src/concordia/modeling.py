"""Model parameterizations, synthetic data, and resampling standard errors.

Two equivalent two-rater parameterizations are supported: the reference
form, where one rater is the reference and the other recognizes a
row-``i`` subject with probability ``recognition[i]`` (answering from a
single ``chance`` distribution otherwise), and the symmetric form used by
the fitting code, where both raters share a recognition event of
probability ``alpha[i]`` and otherwise answer independently from
per-rater distributions.  The conversions are exact inverses on the
domain where the random component exists.

``sample_model`` draws complete rating matrices from the symmetric form;
``bootstrap_se`` turns any joint table into resampled standard errors,
which serve as the independent check of the delta-method variances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import (
    AgreementSummary,
    JointCountTable,
    RatingMatrix,
    summarize,
    _check_dense_budget,
)
from .errors import DataError, UnreliableResamplingError

_TOL = 1e-9


@dataclass(frozen=True)
class ClassicDeltaParams:
    """Reference-rater parameterization for two raters.

    ``row_marginal[i]`` is the reference rater's category distribution,
    ``recognition[i]`` the probability the second rater recognizes (and
    copies) a row-``i`` subject, and ``chance[j]`` the distribution it
    answers from otherwise.
    """

    row_marginal: np.ndarray
    recognition: np.ndarray
    chance: np.ndarray

    def __post_init__(self):
        row = np.asarray(self.row_marginal, dtype=float)
        rec = np.asarray(self.recognition, dtype=float)
        cha = np.asarray(self.chance, dtype=float)
        if not (row.shape == rec.shape == cha.shape) or row.ndim != 1 or row.size < 2:
            raise DataError("all three parameter vectors must share a length K >= 2")
        if abs(row.sum() - 1.0) > _TOL or np.any(row < -_TOL):
            raise DataError("row_marginal must be a probability vector")
        if abs(cha.sum() - 1.0) > _TOL or np.any(cha < -_TOL) or np.any(cha > 1 + _TOL):
            raise DataError("chance must be a probability vector")
        if np.any(rec > 1.0 + _TOL):
            raise DataError("recognition probabilities cannot exceed 1")
        for name, arr in (("row_marginal", row), ("recognition", rec), ("chance", cha)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def agreement_mass(self) -> np.ndarray:
        """Per-category non-chance agreement, row_marginal * recognition."""
        return self.row_marginal * self.recognition

    @property
    def overall(self) -> float:
        return float(self.agreement_mass.sum())


@dataclass(frozen=True)
class NewDeltaParams:
    """Symmetric parameterization: alpha[i] plus per-rater pi columns."""

    alpha: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        if alpha.ndim != 1 or pi.ndim != 2 or pi.shape[0] != alpha.size:
            raise DataError("alpha must be (K,) and pi (K, R)")
        if alpha.size < 2 or pi.shape[1] < 2:
            raise DataError("need K >= 2 and R >= 2")
        if np.any(pi < -_TOL) or np.any(pi > 1.0 + _TOL):
            raise DataError("pi entries must lie in [0, 1]")
        if np.any(np.abs(pi.sum(axis=0) - 1.0) > _TOL):
            raise DataError("each pi column must sum to 1")
        if np.any(alpha > 1.0 + _TOL):
            raise DataError("alpha entries cannot exceed 1")
        delta = float(alpha.sum())
        if delta > 1.0 + _TOL:
            raise DataError("total agreement cannot exceed 1")
        diag = alpha + (1.0 - delta) * pi.prod(axis=1)
        if np.any(diag < -_TOL):
            raise DataError("some unanimous-cell probability is negative")
        alpha = np.ascontiguousarray(alpha)
        pi = np.ascontiguousarray(pi)
        alpha.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "pi", pi)

    @property
    def delta(self) -> float:
        return float(self.alpha.sum())

    @property
    def n_categories(self) -> int:
        return self.alpha.size

    @property
    def n_raters(self) -> int:
        return self.pi.shape[1]

    def cell_probabilities(self) -> np.ndarray:
        """Dense K**R array of model cell probabilities."""
        K, R = self.pi.shape
        _check_dense_budget(K, R)
        probs = self.pi[:, 0].copy()
        for r in range(1, R):
            probs = probs[..., None] * self.pi[:, r]
        probs *= 1.0 - self.delta
        idx = tuple(np.arange(K) for _ in range(R))
        probs[idx] += self.alpha
        return probs


def classic_to_new(c: ClassicDeltaParams) -> NewDeltaParams:
    """Reference form to symmetric form (two raters).

    The second rater's random distribution is the classic chance vector;
    the reference rater's is its residual row mass renormalized by the
    random-component probability.
    """
    delta = c.overall
    if 1.0 - delta <= _TOL:
        raise DataError("conversion needs a random component (overall < 1)")
    alpha = c.agreement_mass
    pi1 = c.row_marginal * (1.0 - c.recognition) / (1.0 - delta)
    return NewDeltaParams(alpha, np.column_stack([pi1, c.chance]))


def new_to_classic(p: NewDeltaParams, orientation: str = "row") -> ClassicDeltaParams:
    """Symmetric form back to a reference form (two raters).

    ``orientation="row"`` makes rater 1 the reference; ``"column"`` makes
    rater 2 the reference.  Both yield the same overall agreement and the
    same per-category agreement mass.
    """
    if p.n_raters != 2:
        raise DataError("the reference form exists for two raters only")
    delta = p.delta
    if 1.0 - delta <= _TOL:
        raise DataError("conversion needs a random component (overall < 1)")
    if orientation == "row":
        marginal = p.alpha + (1.0 - delta) * p.pi[:, 0]
        chance = p.pi[:, 1]
    elif orientation == "column":
        marginal = p.alpha + (1.0 - delta) * p.pi[:, 1]
        chance = p.pi[:, 0]
    else:
        raise DataError("orientation must be 'row' or 'column'")
    if np.any(marginal <= 0.0):
        raise DataError("a zero reference marginal leaves recognition undefined")
    return ClassicDeltaParams(marginal, p.alpha / marginal, chance)


def sample_model(params: NewDeltaParams, n: int, seed: int) -> RatingMatrix:
    """Draw a complete rating matrix from the symmetric model.

    Per subject: with probability alpha[i] every rater answers ``i``;
    with probability 1 - delta each rater answers independently from its
    own pi column.  Sampling requires a generative model, so every
    alpha[i] must be nonnegative.
    """
    if n < 1:
        raise DataError("n must be at least 1")
    if np.any(params.alpha < 0.0):
        raise DataError("sampling requires nonnegative alpha (generative regime)")
    K, R = params.n_categories, params.n_raters
    rng = np.random.default_rng(seed)
    mix = np.append(np.clip(params.alpha, 0.0, None), max(0.0, 1.0 - params.delta))
    mix /= mix.sum()
    source = rng.choice(K + 1, size=n, p=mix)
    labels = np.empty((n, R), dtype=np.int64)
    unanimous = source < K
    labels[unanimous] = (source[unanimous] + 1)[:, None]
    n_random = int((~unanimous).sum())
    if n_random:
        cols = np.empty((n_random, R), dtype=np.int64)
        for r in range(R):
            cols[:, r] = rng.choice(K, size=n_random, p=params.pi[:, r] /
                                    params.pi[:, r].sum()) + 1
        labels[~unanimous] = cols
    return RatingMatrix(labels, K)


@dataclass(frozen=True)
class BootstrapResult:
    """Resampled standard deviations of the fitted agreement measures.

    For general tables the fields describe the overall agreement, the
    per-category agreement masses, and the consistencies; for 2x2 tables
    they describe the starred (rescaled) versions of the same measures.
    Replicates where the solver degenerates are skipped and counted, as
    are per-category consistencies that were undefined in a replicate.
    """

    se_delta: float
    se_alpha: np.ndarray
    se_consistency: np.ndarray
    replicates: int
    n_degenerate: int
    n_undefined_consistency: np.ndarray
    seed: int
    parametric: bool
    kind: str


def bootstrap_se(
    table: JointCountTable,
    replicates: int,
    seed: int,
    *,
    parametric: bool = False,
    grid_points: int = 512,
    b_cap: float = 1e3,
) -> BootstrapResult:
    """Standard errors by multinomial resampling and refitting.

    With ``parametric=False`` the multinomial is the observed cell
    proportions; with ``parametric=True`` it is the fitted model's cell
    probabilities (for 2x2 tables, the fitted block renormalized to the
    real categories).  Fixed ``seed`` makes the result bit-reproducible;
    all randomness is drawn up front, so replicate fitting order cannot
    affect it.

    Raises
    ------
    UnreliableResamplingError
        When more than 20 percent of the replicates degenerate.
    """
    if replicates < 100:
        raise DataError("at least 100 replicates are required")
    n_int = int(round(table.total))
    if n_int < 1:
        raise DataError("table total rounds to zero subjects")
    rng = np.random.default_rng(seed)
    binary = table.n_categories == 2 and table.n_raters == 2
    if binary:
        return _bootstrap_binary(table, replicates, rng, seed, parametric,
                                 n_int, grid_points, b_cap)
    return _bootstrap_general(table, replicates, rng, seed, parametric,
                              n_int, grid_points, b_cap)


def _sampling_cells(table: JointCountTable, parametric: bool,
                    grid_points: int, b_cap: float):
    """(cell keys, probabilities) for the resampling multinomial."""
    from .delta import fit_delta
    from .inference import expected_cell_probabilities
    import itertools

    if not parametric:
        keys = sorted(table.cells)
        probs = np.array([table.cells[k] for k in keys]) / table.total
        return keys, probs
    fit = fit_delta(summarize(table), grid_points=grid_points, b_cap=b_cap)
    dense = expected_cell_probabilities(fit)
    K, R = table.n_categories, table.n_raters
    keys = []
    probs = []
    for key in itertools.product(range(1, K + 1), repeat=R):
        pv = dense[tuple(c - 1 for c in key)]
        if pv > 0.0:
            keys.append(key)
            probs.append(pv)
    probs = np.asarray(probs)
    return keys, probs / probs.sum()


def _bootstrap_general(table, replicates, rng, seed, parametric, n_int,
                       grid_points, b_cap):
    from .delta import _make_work, fit_core

    K, R = table.n_categories, table.n_raters
    keys, probs = _sampling_cells(table, parametric, grid_points, b_cap)
    counts = rng.multinomial(n_int, probs, size=replicates)
    # per-cell membership: which (category, rater) margins a cell feeds
    member = np.zeros((len(keys), K * R))
    diag = np.zeros((len(keys), K))
    for c, key in enumerate(keys):
        for r, cat in enumerate(key):
            member[c, (cat - 1) * R + r] = 1.0
        if len(set(key)) == 1:
            diag[c, key[0] - 1] = 1.0
    t_all = (counts @ member).reshape(replicates, K, R) / n_int
    p_all = counts @ diag / n_int

    work = _make_work(K)
    deltas = np.full(replicates, np.nan)
    alphas = np.full((replicates, K), np.nan)
    cons = np.full((replicates, K), np.nan)
    degenerate = 0
    for m in range(replicates):
        p = p_all[m]
        d = np.clip(t_all[m] - p[:, None], 0.0, None)
        res = fit_core(p, d, grid_points=grid_points, b_cap=b_cap, _work=work)
        if res is None:
            degenerate += 1
            continue
        B, lam = res
        alpha = p - lam
        deltas[m] = 1.0 - B
        alphas[m] = alpha
        n_cat = R * p + d.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cons[m] = np.where(n_cat > 0, R * alpha / np.where(n_cat > 0, n_cat, 1.0),
                               np.nan)
    if degenerate > 0.2 * replicates:
        raise UnreliableResamplingError(
            f"{degenerate} of {replicates} replicates degenerated; the "
            f"resampled standard errors would be unreliable"
        )
    undef = np.isnan(cons).sum(axis=0) - degenerate
    return BootstrapResult(
        se_delta=float(np.nanstd(deltas, ddof=1)),
        se_alpha=np.nanstd(alphas, axis=0, ddof=1),
        se_consistency=np.nanstd(cons, axis=0, ddof=1),
        replicates=replicates,
        n_degenerate=degenerate,
        n_undefined_consistency=np.maximum(undef, 0),
        seed=seed,
        parametric=parametric,
        kind="general",
    )


def _bootstrap_binary(table, replicates, rng, seed, parametric, n_int,
                      grid_points, b_cap):
    from .binary import binary_core, fit_binary

    if parametric:
        from .inference import expected_cell_probabilities

        fit = fit_binary(table, grid_points=grid_points, b_cap=b_cap)
        dense = expected_cell_probabilities(fit.inner)
        block = dense[:2, :2]
        probs = (block / block.sum()).ravel()
    else:
        block = np.array([[table.count((1, 1)), table.count((1, 2))],
                          [table.count((2, 1)), table.count((2, 2))]])
        probs = (block / block.sum()).ravel()
    counts = rng.multinomial(n_int, probs, size=replicates).reshape(replicates, 2, 2)
    deltas = np.full(replicates, np.nan)
    alphas = np.full((replicates, 2), np.nan)
    cons = np.full((replicates, 2), np.nan)
    degenerate = 0
    for m in range(replicates):
        res = binary_core(counts[m], grid_points=grid_points, b_cap=b_cap)
        if res is None:
            degenerate += 1
            continue
        deltas[m], alphas[m], cons[m] = res
    if degenerate > 0.2 * replicates:
        raise UnreliableResamplingError(
            f"{degenerate} of {replicates} replicates degenerated; the "
            f"resampled standard errors would be unreliable"
        )
    undef = np.isnan(cons).sum(axis=0) - degenerate
    return BootstrapResult(
        se_delta=float(np.nanstd(deltas, ddof=1)),
        se_alpha=np.nanstd(alphas, axis=0, ddof=1),
        se_consistency=np.nanstd(cons, axis=0, ddof=1),
        replicates=replicates,
        n_degenerate=degenerate,
        n_undefined_consistency=np.maximum(undef, 0),
        seed=seed,
        parametric=parametric,
        kind="binary",
    )
