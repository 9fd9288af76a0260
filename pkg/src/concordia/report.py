"""Analysis orchestration and report rendering for the CLI.

``analyze_table`` runs the requested measures over one joint table and
returns a JSON-ready dictionary (schema version 1).  ``render_text``
formats the same dictionary as aligned human-readable tables.  Full
precision always lives in the JSON; the text view rounds for display.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from .binary import augment_2x2, fit_binary
from .data import JointCountTable, drop_rater, smooth, summarize
from .delta import DeltaFit, consistencies, fit_delta
from .errors import DataError, SaturatedModelError, ShapeError
from .inference import confidence_bounds, estimate_variances, goodness_of_fit
from .kappa import (
    KappaResult,
    cohen_kappa,
    fleiss_kappa,
    hubert_pairwise_kappa,
    hubert_r_wise_kappa,
    per_category_kappa,
    raw_agreement,
)
from .modeling import bootstrap_se

SCHEMA_VERSION = 1

MEASURE_TOKENS = ("raw", "cohen", "fleiss", "hubert-r", "hubert-pairwise",
                  "delta", "all")
_KAPPA_BY_TOKEN = {
    "raw": ("raw", raw_agreement),
    "cohen": ("cohen", cohen_kappa),
    "fleiss": ("fleiss", fleiss_kappa),
    "hubert-r": ("hubert_r_wise", hubert_r_wise_kappa),
    "hubert-pairwise": ("hubert_pairwise", hubert_pairwise_kappa),
}


def _jsonify(value: Any) -> Any:
    """Make a value JSON-serializable; NaN and infinities become None."""
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _kappa_entry(result: KappaResult) -> dict:
    if not result.defined:
        return {"status": "undefined", "reason": result.undefined_reason,
                "observed_index": result.observed_index,
                "expected_index": result.expected_index}
    entry = {"status": "ok", "value": result.value}
    if result.observed_index is not None:
        entry["observed_index"] = result.observed_index
    if result.expected_index is not None:
        entry["expected_index"] = result.expected_index
    if result.components:
        entry["components"] = dict(result.components)
    return entry


def resolve_measures(tokens: list[str], n_raters: int) -> list[str]:
    """Expand 'all' and validate measure names against the table shape."""
    seen: list[str] = []
    for token in tokens:
        if token not in MEASURE_TOKENS:
            raise DataError(
                f"unknown measure {token!r}; expected one of {', '.join(MEASURE_TOKENS)}"
            )
        if token == "all":
            for expanded in ("raw", "cohen", "fleiss", "hubert-r",
                             "hubert-pairwise", "delta"):
                if expanded == "cohen" and n_raters != 2:
                    continue  # silently shape-gated under 'all'
                if expanded not in seen:
                    seen.append(expanded)
            continue
        if token == "cohen" and n_raters != 2:
            raise DataError("the cohen measure requires exactly 2 raters")
        if token not in seen:
            seen.append(token)
    return seen


def _delta_block(table: JointCountTable, want_se: bool, want_gof: bool,
                 ci_level: float | None, sided: str, gof_alpha: float) -> dict:
    s = summarize(table)
    fit = fit_delta(s)
    block: dict[str, Any] = {
        "status": "ok",
        "scale_B": fit.B,
        "delta": fit.delta_total,
        "alpha": fit.alpha,
        "lambda": fit.lambdas,
        "pi": fit.pi,
        "consistency": consistencies(fit, s),
        "I_pi": fit.I_pi,
        "diagnostics": {
            "branch": list(fit.diagnostics.branch),
            "g_residual": fit.diagnostics.g_residual,
            "smoothing_applied": fit.diagnostics.smoothing_applied,
            "perfect_agreement": fit.diagnostics.perfect_agreement,
            "degenerate": fit.diagnostics.degenerate,
            "n_candidates": fit.diagnostics.n_candidates,
            "candidates": [list(c) for c in fit.diagnostics.candidates],
        },
    }
    report = None
    if want_se or ci_level is not None:
        report = estimate_variances(fit, s)
        block["se"] = {
            "delta": report.se_delta,
            "alpha": report.se_alpha,
            "consistency": report.se_consistency,
            "smoothing_applied": report.smoothing_applied,
            "n_used": report.n_used,
            "warnings": list(report.warnings),
        }
    if ci_level is not None:
        cb = confidence_bounds(report, fit, ci_level, sided)
        block["ci"] = {
            "level": cb.level,
            "sided": cb.sided,
            "delta": list(cb.delta),
            "alpha_lo": cb.alpha_lo, "alpha_hi": cb.alpha_hi,
            "consistency_lo": cb.consistency_lo,
            "consistency_hi": cb.consistency_hi,
            "note": cb.note,
        }
    if want_gof:
        gof_table = table
        if not math.isclose(fit.summary.n, table.total, rel_tol=1e-9):
            gof_table = smooth(table)  # the fit fell back to the smoothed table
        try:
            gof = goodness_of_fit(fit, gof_table)
            block["gof"] = {
                "chi_square": gof.chi_square,
                "df": gof.df,
                "p_value": gof.p_value,
                "cells_expected_lt_1": gof.cells_expected_lt_1,
                "cells_expected_le_5": gof.cells_expected_le_5,
                "reliability_warning": gof.reliability_warning,
                "incompatible": gof.incompatible,
                "significant": gof.p_value < gof_alpha,
                "alpha": gof_alpha,
            }
        except SaturatedModelError as exc:
            block["gof"] = {"status": "unavailable", "reason": str(exc)}
    return block


def _binary_block(table: JointCountTable, want_gof: bool,
                  ci_level: float | None, sided: str, gof_alpha: float) -> dict:
    fit = fit_binary(table)
    inner = fit.inner
    block: dict[str, Any] = {
        "status": "ok",
        "alpha_star": fit.alpha_star,
        "delta_star": fit.delta_star,
        "consistency_star": fit.consistency_star,
        "se": {
            "delta_star": fit.se_delta_star,
            "alpha_star": fit.se_alpha_star,
            "consistency_star": fit.se_consistency_star,
            "warnings": list(fit.warnings),
        },
        "dummy_row_mass": fit.dummy_row_mass,
        "x3": fit.x3,
        "augmented_fit": {
            "scale_B": inner.B,
            "delta": inner.delta_total,
            "alpha": inner.alpha,
            "pi": inner.pi,
        },
    }
    if ci_level is not None:
        from statistics import NormalDist

        q = (1.0 + ci_level) / 2.0 if sided == "two" else ci_level
        z = NormalDist().inv_cdf(q)

        def pair(est, se):
            if sided == "lower":
                return [est - z * se, None]
            if sided == "upper":
                return [None, est + z * se]
            return [est - z * se, est + z * se]

        block["ci"] = {
            "level": ci_level,
            "sided": sided,
            "delta_star": pair(fit.delta_star, fit.se_delta_star),
            "alpha_star": [pair(e, s) for e, s in
                           zip(fit.alpha_star, fit.se_alpha_star)],
            "consistency_star": [pair(e, s) for e, s in
                                 zip(fit.consistency_star, fit.se_consistency_star)],
            "note": "bounds are reported unclipped and may fall outside [-1, 1]",
        }
    if want_gof:
        gof = goodness_of_fit(inner, augment_2x2(table))
        block["gof"] = {
            "chi_square": gof.chi_square,
            "df": gof.df,
            "p_value": gof.p_value,
            "cells_expected_lt_1": gof.cells_expected_lt_1,
            "cells_expected_le_5": gof.cells_expected_le_5,
            "reliability_warning": gof.reliability_warning,
            "incompatible": gof.incompatible,
            "significant": gof.p_value < gof_alpha,
            "alpha": gof_alpha,
            "note": "computed on the augmented, smoothed 3x3 table",
        }
    return block


def analyze_table(
    table: JointCountTable,
    *,
    measures: list[str] | None = None,
    want_se: bool = False,
    want_gof: bool = False,
    ci_level: float | None = None,
    sided: str = "two",
    gof_alpha: float = 0.05,
    drop_rater_sweep: bool = False,
    collapsed_kappa: bool = False,
    force_smooth: bool = False,
    force_general: bool = False,
    bootstrap: int | None = None,
    parametric: bool = False,
    seed: int = 0,
) -> dict:
    """Run the requested analyses on one table and return the report dict."""
    K, R = table.n_categories, table.n_raters
    binary = K == 2 and R == 2
    if force_general and binary:
        raise ShapeError(
            "the general model is under-identified for 2 categories and "
            "2 raters; --force-general is not available there"
        )
    wanted = resolve_measures(measures or ["all"], R)
    work_table = smooth(table) if force_smooth else table
    s = summarize(work_table)
    report: dict[str, Any] = {
        "schema": SCHEMA_VERSION,
        "shape": {"n": table.total, "n_categories": K, "n_raters": R},
        "route": "binary" if binary else "general",
        "smoothed_input": force_smooth,
        "measures": {},
    }
    for token in wanted:
        if token == "delta":
            continue
        kind, func = _KAPPA_BY_TOKEN[token]
        report["measures"][kind] = _kappa_entry(func(s))
    if "delta" in wanted:
        if binary:
            report["measures"]["delta_binary"] = _binary_block(
                work_table, want_gof, ci_level, sided, gof_alpha
            )
        else:
            report["measures"]["delta"] = _delta_block(
                work_table, want_se, want_gof, ci_level, sided, gof_alpha
            )
    if collapsed_kappa:
        kind = "cohen" if R == 2 else "hubert_r_wise"
        values = [
            _kappa_entry(per_category_kappa(work_table, i, kind))
            for i in range(1, K + 1)
        ]
        report["collapsed_kappa"] = {"kind": kind, "per_category": values}
    if drop_rater_sweep:
        if R < 3:
            raise ShapeError("the leave-one-rater-out sweep needs at least 3 raters")
        sweep = []
        for r in range(1, R + 1):
            sub = drop_rater(work_table, r)
            sub_s = summarize(sub)
            if sub.n_categories == 2 and sub.n_raters == 2:
                bfit = fit_binary(sub)
                sweep.append({
                    "dropped_rater": r,
                    "overall": bfit.delta_star,
                    "consistency": bfit.consistency_star,
                })
            else:
                sub_fit = fit_delta(sub_s)
                sweep.append({
                    "dropped_rater": r,
                    "overall": sub_fit.delta_total,
                    "consistency": consistencies(sub_fit, sub_s),
                })
        report["drop_rater_sweep"] = sweep
    if bootstrap is not None:
        bres = bootstrap_se(work_table, bootstrap, seed, parametric=parametric)
        report["bootstrap"] = {
            "replicates": bres.replicates,
            "seed": bres.seed,
            "parametric": bres.parametric,
            "kind": bres.kind,
            "se_delta": bres.se_delta,
            "se_alpha": bres.se_alpha,
            "se_consistency": bres.se_consistency,
            "n_degenerate": bres.n_degenerate,
            "n_undefined_consistency": bres.n_undefined_consistency,
        }
    return _jsonify(report)


_MEASURE_LABELS = {
    "raw": "raw agreement",
    "cohen": "cohen kappa",
    "fleiss": "fleiss kappa",
    "hubert_r_wise": "hubert R-wise kappa",
    "hubert_pairwise": "hubert pairwise kappa",
}


def render_text(report: dict, precision: int = 4) -> str:
    """Aligned text rendering of an analysis report."""

    def f(x) -> str:
        if x is None:
            return "n/a"
        return f"{x:.{precision}f}"

    shape = report["shape"]
    lines = [
        f"Agreement analysis: n={shape['n']:g} subjects, "
        f"{shape['n_raters']} raters, {shape['n_categories']} categories",
        f"route: {report['route']} model"
        + ("  [input smoothed by +0.5]" if report.get("smoothed_input") else ""),
        "",
    ]
    measures = report["measures"]
    summary_rows = []
    for kind, label in _MEASURE_LABELS.items():
        if kind in measures:
            entry = measures[kind]
            value = f(entry.get("value")) if entry.get("status") == "ok" else (
                f"undefined ({entry.get('reason')})")
            summary_rows.append((label, value))
    delta_block = measures.get("delta")
    if delta_block and delta_block.get("status") == "ok":
        summary_rows.insert(1 if summary_rows else 0,
                            ("multi-rater delta", f(delta_block["delta"])))
    binary_block = measures.get("delta_binary")
    if binary_block:
        summary_rows.insert(1 if summary_rows else 0,
                            ("delta (2x2, rescaled)", f(binary_block["delta_star"])))
    if summary_rows:
        lines.append("Overall agreement")
        width = max(len(r[0]) for r in summary_rows) + 2
        for label, value in summary_rows:
            lines.append(f"  {label:<{width}}{value}")
        lines.append("")
    if delta_block and delta_block.get("status") == "ok":
        lines += _render_delta(delta_block, f)
    if binary_block:
        lines += _render_binary(binary_block, f)
    if "collapsed_kappa" in report:
        ck = report["collapsed_kappa"]
        lines.append(f"Collapsed per-category kappa ({ck['kind']})")
        for i, entry in enumerate(ck["per_category"], start=1):
            value = f(entry.get("value")) if entry.get("status") == "ok" else "undefined"
            lines.append(f"  category {i}: {value}")
        lines.append("")
    if "drop_rater_sweep" in report:
        lines.append("Leave-one-rater-out (overall; per-category consistency)")
        for entry in report["drop_rater_sweep"]:
            cons = ", ".join(f(c) for c in entry["consistency"])
            lines.append(
                f"  without rater {entry['dropped_rater']}: "
                f"{f(entry['overall'])}  ({cons})"
            )
        lines.append("")
    if "bootstrap" in report:
        bs = report["bootstrap"]
        lines.append(
            f"Bootstrap ({bs['replicates']} replicates, "
            f"{'parametric' if bs['parametric'] else 'nonparametric'}, "
            f"seed {bs['seed']}, {bs['n_degenerate']} degenerate)"
        )
        lines.append(f"  se(delta) = {f(bs['se_delta'])}")
        lines.append("  se(alpha) = " + ", ".join(f(x) for x in bs["se_alpha"]))
        lines.append("  se(consistency) = "
                     + ", ".join(f(x) for x in bs["se_consistency"]))
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _render_delta(block: dict, f) -> list[str]:
    lines = [f"Mixture fit (B = {f(block['scale_B'])})"]
    K = len(block["alpha"])
    R = len(block["pi"][0])
    se = block.get("se")
    header = "  cat   alpha     " + "".join(f"pi r={r + 1}   " for r in range(R)) \
        + "consistency"
    if se:
        header += "   se(consistency)"
    lines.append(header)
    for i in range(K):
        row = f"  {i + 1:<5}{f(block['alpha'][i]):<10}"
        row += "".join(f"{f(block['pi'][i][r]):<9}" for r in range(R))
        row += f"{f(block['consistency'][i]):<14}"
        if se:
            row += f(se["consistency"][i])
        lines.append(row)
    tail = f"  overall delta = {f(block['delta'])}"
    if se:
        tail += f"  (se {f(se['delta'])}"
        if se.get("smoothing_applied"):
            tail += ", smoothed +0.5"
        tail += ")"
    lines.append(tail)
    diag = block["diagnostics"]
    if diag.get("degenerate"):
        lines.append("  note: table was degenerate; fit used the +0.5-smoothed data")
    if "ci" in block:
        ci = block["ci"]
        lo, hi = ci["delta"]
        lines.append(
            f"  {ci['sided']}-sided {100 * ci['level']:g}% bound on delta: "
            f"[{f(lo) if lo is not None else '-inf'}, "
            f"{f(hi) if hi is not None else '+inf'}]"
        )
    if "gof" in block:
        lines += _render_gof(block["gof"], f)
    lines.append("")
    return lines


def _render_binary(block: dict, f) -> list[str]:
    lines = ["2x2 fit via dummy-category augmentation"]
    lines.append("  cat   alpha*    consistency*   se(consistency*)")
    for i in range(2):
        lines.append(
            f"  {i + 1:<5}{f(block['alpha_star'][i]):<10}"
            f"{f(block['consistency_star'][i]):<15}"
            f"{f(block['se']['consistency_star'][i])}"
        )
    lines.append(
        f"  overall delta* = {f(block['delta_star'])}"
        f"  (se {f(block['se']['delta_star'])})"
    )
    if "ci" in block:
        ci = block["ci"]
        lo, hi = ci["delta_star"]
        lines.append(
            f"  {ci['sided']}-sided {100 * ci['level']:g}% bound on delta*: "
            f"[{f(lo) if lo is not None else '-inf'}, "
            f"{f(hi) if hi is not None else '+inf'}]"
        )
    if "gof" in block:
        lines += _render_gof(block["gof"], f)
    lines.append("")
    return lines


def _render_gof(gof: dict, f) -> list[str]:
    if gof.get("status") == "unavailable":
        return [f"  goodness of fit unavailable: {gof['reason']}"]
    chi = gof["chi_square"]
    chi_text = f(chi) if chi is not None else "inf (incompatible cell)"
    lines = [
        f"  goodness of fit: chi-square {chi_text} "
        f"(df {gof['df']}, p {f(gof['p_value'])})"
        + ("  [significant]" if gof["significant"] else ""),
        f"  expected cells < 1: {gof['cells_expected_lt_1']}, "
        f"<= 5: {gof['cells_expected_le_5']}"
        + ("  [chi-square approximation unreliable]"
           if gof["reliability_warning"] else ""),
    ]
    if gof.get("note"):
        lines.append(f"  note: {gof['note']}")
    return lines
