"""Numeric kernel: stationary-candidate search for the agreement mixture.

For each category ``i`` whose disagreement proportions ``d[i, r]`` are all
positive, an interior stationary point of the multinomial log-likelihood
requires a nonnegative root ``lam`` of the per-category equation

    prod_r (lam + d[i, r]) = B**(R-1) * lam,

and the scale parameter ``B`` must close the system through

    g(B) = sum_i lam_i(B) - B + D = 0,

where ``D`` is the total disagreement proportion and ``lam_i = 0`` whenever
some rater never disagrees on category ``i``.  The left side of the
per-category equation minus the right is convex in ``lam``, so a category
contributes zero, one (tangency), or two roots; an assignment of low/high
roots to the categories is called a branch, and every branch defines its
own ``g``.

``scan_candidates`` walks a geometric grid of ``B`` values, locates the
left edge of the feasible region by bisection when the grid starts outside
it, refines every sign change of ``g`` per branch by bisection plus a
safeguarded Newton polish, and reports all solutions found.  Likelihood
ranking of the candidates happens in ``fit_kernel`` (compiled) or in the
caller.

Root solving uses closed forms for two and three raters (quadratic and a
trigonometric cubic) and derivative bracketing plus bisection otherwise.
The closed forms run unpolished while scanning, where only signs matter,
and get a Newton polish wherever a root is actually reported.

Every function compiles under numba when available and runs as plain
Python otherwise.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly by every test run
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


MAX_CANDIDATES = 256
MAX_BRANCH_CATEGORIES = 16  # branch enumeration is 2**n_pos

_COS23 = -0.5                    # cos(2*pi/3)
_SIN23 = 0.8660254037844386      # sin(2*pi/3)
_G_ZERO_TOL = 1e-11
_EDGE_ZERO_TOL = 1e-7  # roots lose ~half their digits at a tangency
_F_TIE = 1e-10
_B_DEDUPE = 1e-9


@njit(cache=True)
def _residual(lam, d, c):
    prod = 1.0
    for r in range(d.size):
        prod *= lam + d[r]
    return prod - c * lam


@njit(cache=True)
def _bisect_residual(d, c, a, b):
    ha = _residual(a, d, c)
    hb = _residual(b, d, c)
    if (ha > 0.0) == (hb > 0.0):
        # no bracket (tangency roundoff): the endpoint closer to zero wins
        return a if abs(ha) <= abs(hb) else b
    for _ in range(200):
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        hm = _residual(m, d, c)
        if (hm > 0.0) == (ha > 0.0):
            a = m
            ha = hm
        else:
            b = m
    return 0.5 * (a + b)


@njit(cache=True)
def _newton_refine(lam, d, c, lo, hi):
    # Newton from a closed-form estimate, bisection on [lo, hi] if it strays
    x = lam
    for _ in range(3):
        prod = 1.0
        for r in range(d.size):
            prod *= x + d[r]
        slope = 0.0
        for r in range(d.size):
            slope += 1.0 / (x + d[r])
        hp = prod * slope - c
        if hp == 0.0:
            return x
        x2 = x - (prod - c * x) / hp
        if not (lo - 1e-12 <= x2 <= hi + 1e-12) or not np.isfinite(x2):
            return _bisect_residual(d, c, lo, hi)
        x = x2
    return x


@njit(cache=True)
def _roots_pair(d, c, lam_up, polish):
    """Nonnegative roots of the per-category equation, as (ok, low, high).

    ``c`` is B**(R-1) and ``lam_up`` any upper bound with a positive
    residual; B itself always works because prod(B + d) > B**R.  With
    ``polish`` False the closed forms are returned raw, which is enough
    for sign scanning.
    """
    R = d.size
    if R == 2:
        s = d[0] + d[1]
        q = d[0] * d[1]
        b = s - c
        disc = b * b - 4.0 * q
        if disc < 0.0 or b >= 0.0:
            return False, 0.0, 0.0
        hi = 0.5 * (-b + np.sqrt(disc))
        return True, q / hi, hi
    if R == 3:
        a = d[0] + d[1] + d[2]
        b = d[0] * d[1] + d[0] * d[2] + d[1] * d[2] - c
        q = d[0] * d[1] * d[2]
        if b >= 0.0:
            return False, 0.0, 0.0
        lam_star = (-a + np.sqrt(a * a - 3.0 * b)) / 3.0
        if _residual(lam_star, d, c) > 0.0:
            return False, 0.0, 0.0
        # trig solution of the depressed cubic; all three roots are real
        # here, one negative, and the cosine ordering is monotone in k
        p = b - a * a / 3.0
        q0 = 2.0 * a * a * a / 27.0 - a * b / 3.0 + q
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = 3.0 * q0 / (p * m)
        if arg > 1.0:
            arg = 1.0
        elif arg < -1.0:
            arg = -1.0
        th = np.arccos(arg) / 3.0
        ct = np.cos(th)
        st = np.sin(th)
        hi = m * ct - a / 3.0
        lo = m * (_COS23 * ct + _SIN23 * st) - a / 3.0
        if polish:
            lo = _newton_refine(lo, d, c, 0.0, lam_star)
            hi = _newton_refine(hi, d, c, lam_star, max(lam_up, hi))
        else:
            if lo < 0.0:
                lo = 0.0
        return True, lo, hi
    # generic rater count: bracket the residual's minimizer first
    prod0 = 1.0
    slope0 = 0.0
    for r in range(R):
        prod0 *= d[r]
        slope0 += 1.0 / d[r]
    if prod0 * slope0 - c >= 0.0:
        return False, 0.0, 0.0
    a = 0.0
    b = lam_up
    for _ in range(200):
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        prod = 1.0
        slope = 0.0
        for r in range(R):
            prod *= m + d[r]
            slope += 1.0 / (m + d[r])
        if prod * slope - c < 0.0:
            a = m
        else:
            b = m
    lam_star = 0.5 * (a + b)
    if _residual(lam_star, d, c) > 0.0:
        return False, 0.0, 0.0
    lo = _bisect_residual(d, c, 0.0, lam_star)
    hi = _bisect_residual(d, c, lam_star, lam_up)
    return True, lo, hi


@njit(cache=True)
def _feasible(B, pos, n_pos, d):
    R = d.shape[1]
    c = B ** (R - 1)
    for j in range(n_pos):
        ok, _, _ = _roots_pair(d[pos[j]], c, B, False)
        if not ok:
            return False
    return True


@njit(cache=True)
def _branch_g(B, bits, pos, n_pos, d, d_total, polish):
    R = d.shape[1]
    c = B ** (R - 1)
    tot = 0.0
    for j in range(n_pos):
        ok, lo, hi = _roots_pair(d[pos[j]], c, B, polish)
        if not ok:
            return np.nan
        tot += hi if (bits >> j) & 1 else lo
    return tot - B + d_total


@njit(cache=True)
def _edge_bisect(b_bad, b_good, pos, n_pos, d):
    # smallest B known to admit roots for every branching category
    for _ in range(100):
        m = 0.5 * (b_bad + b_good)
        if m == b_bad or m == b_good:
            break
        if _feasible(m, pos, n_pos, d):
            b_good = m
        else:
            b_bad = m
    return b_good


@njit(cache=True)
def _bisect_g_root(b_lo, g_lo, b_hi, g_hi, bits, pos, n_pos, d, d_total):
    if g_lo == 0.0:
        return b_lo
    if g_hi == 0.0:
        return b_hi
    for _ in range(90):
        m = 0.5 * (b_lo + b_hi)
        if m == b_lo or m == b_hi:
            break
        gm = _branch_g(m, bits, pos, n_pos, d, d_total, False)
        if np.isnan(gm):
            # infeasible points lie left of the feasible region
            b_lo = m
            continue
        if (gm > 0.0) == (g_lo > 0.0):
            b_lo = m
            g_lo = gm
        else:
            b_hi = m
            g_hi = gm
    mid = 0.5 * (b_lo + b_hi)
    if np.isnan(_branch_g(mid, bits, pos, n_pos, d, d_total, False)):
        return b_hi
    return mid


@njit(cache=True)
def _polish_B(B, bits, pos, n_pos, d, d_total, b_lo, b_hi):
    """Safeguarded Newton on g with exact root evaluations.

    dlam/dB = (R-1) * B**(R-2) * lam / h'(lam) at either root, so g has an
    analytic derivative once the roots are polished.
    """
    R = d.shape[1]
    best_b = B
    best_g = np.inf
    for _ in range(8):
        c = B ** (R - 1)
        g = d_total - B
        gp = -1.0
        bad = False
        for j in range(n_pos):
            ok, lo, hi = _roots_pair(d[pos[j]], c, B, True)
            if not ok:
                bad = True
                break
            lam = hi if (bits >> j) & 1 else lo
            g += lam
            prod = 1.0
            slope = 0.0
            for r in range(R):
                prod *= lam + d[pos[j], r]
                slope += 1.0 / (lam + d[pos[j], r])
            hp = prod * slope - c
            if hp == 0.0:
                bad = True
                break
            gp += (R - 1) * B ** (R - 2) * lam / hp
        if bad:
            break
        if abs(g) < best_g:
            best_g = abs(g)
            best_b = B
        if abs(g) <= 1e-14 or gp == 0.0:
            break
        b2 = B - g / gp
        if not np.isfinite(b2) or b2 <= b_lo or b2 >= b_hi:
            break
        B = b2
    return best_b


@njit(cache=True)
def _store(B, bits, pos, n_pos, d, d_total, out_b, out_lam, out_bits, count):
    """Record a candidate, forcing the closure residual to exactly zero.

    Roots computed at a near-tangency B carry ~sqrt(eps) noise, so the
    residual slack is absorbed into the best-conditioned category's root;
    that keeps the implied response columns summing to one by construction
    while moving the per-category equations by no more than the noise that
    was already there.
    """
    if count >= out_b.size:
        return count + 1
    K, R = d.shape
    c = B ** (R - 1)
    for i in range(K):
        out_lam[count, i] = 0.0
    total = 0.0
    noisy_j = -1
    noisy_cond = np.inf
    for j in range(n_pos):
        i = pos[j]
        ok, lo, hi = _roots_pair(d[i], c, B, True)
        if not ok:
            out_lam[count, i] = np.nan
            out_b[count] = B
            out_bits[count] = bits
            return count + 1
        lam = hi if (bits >> j) & 1 else lo
        out_lam[count, i] = lam
        total += lam
        prod = 1.0
        slope = 0.0
        for r in range(R):
            prod *= lam + d[i, r]
            slope += 1.0 / (lam + d[i, r])
        cond = abs(prod * slope - c)  # root derivative; ~0 at a tangency
        if cond < noisy_cond:
            noisy_cond = cond
            noisy_j = j
    slack = (B - d_total) - total
    if noisy_j >= 0 and out_lam[count, pos[noisy_j]] + slack >= 0.0:
        out_lam[count, pos[noisy_j]] += slack
    out_b[count] = B
    out_bits[count] = bits
    return count + 1


@njit(cache=True)
def _polish_verify_store(B, b_lo, b_hi, bits, pos, n_pos, d, d_total,
                         out_b, out_lam, out_bits, count):
    """Newton-polish an approximate root and store it if g really vanishes.

    The acceptance window scales like the sqrt(eps) root noise at a
    tangency; anything worse is a scan artifact, not a solution.
    """
    root = _polish_B(B, bits, pos, n_pos, d, d_total, b_lo, b_hi)
    g = _branch_g(root, bits, pos, n_pos, d, d_total, True)
    if np.isfinite(g) and abs(g) <= 3e-8 * root:
        return _store(root, bits, pos, n_pos, d, d_total,
                      out_b, out_lam, out_bits, count)
    return count


@njit(cache=True)
def _scan(d, d_total, b_lo, b_cap, n_grid, pos, n_pos,
          out_b, out_lam, out_bits):
    K, R = d.shape
    G = n_grid
    grid = np.empty(G)
    step = np.log(b_cap / b_lo) / (G - 1)
    for gi in range(G):
        grid[gi] = b_lo * np.exp(step * gi)
    grid[G - 1] = b_cap

    lam_lo = np.zeros((G, K))
    lam_hi = np.zeros((G, K))
    feas = np.ones(G, np.bool_)
    for gi in range(G):
        c = grid[gi] ** (R - 1)
        for j in range(n_pos):
            i = pos[j]
            ok, lo, hi = _roots_pair(d[i], c, grid[gi], False)
            if not ok:
                feas[gi] = False
                break
            lam_lo[gi, i] = lo
            lam_hi[gi, i] = hi
    edge_b = np.full(G, np.nan)
    for gi in range(1, G):
        if feas[gi] and not feas[gi - 1]:
            edge_b[gi] = _edge_bisect(grid[gi - 1], grid[gi], pos, n_pos, d)

    count = 0
    for bits in range(1 << n_pos):
        have_prev = False
        prev_b = 0.0
        prev_g = 0.0
        # a "flat run" is a stretch with g identically ~0 (a non-identified
        # ridge of equal-likelihood solutions); it is reported once, at its
        # smallest B, matching the smaller-B tie rule
        in_flat = False
        for gi in range(G):
            if not feas[gi]:
                have_prev = False
                in_flat = False
                continue
            if not have_prev and not np.isnan(edge_b[gi]):
                ge = _branch_g(edge_b[gi], bits, pos, n_pos, d, d_total, True)
                if np.isfinite(ge):
                    if abs(ge) <= _EDGE_ZERO_TOL:
                        # candidate sitting (numerically) on the feasibility
                        # edge; polish decides whether it is a real root
                        count = _polish_verify_store(
                            edge_b[gi], edge_b[gi] * (1.0 - 1e-9),
                            grid[gi] * (1.0 + 1e-12), bits, pos, n_pos, d,
                            d_total, out_b, out_lam, out_bits, count)
                        in_flat = True
                    have_prev = True
                    prev_b = edge_b[gi]
                    prev_g = ge
            g = d_total - grid[gi]
            for j in range(n_pos):
                i = pos[j]
                g += lam_hi[gi, i] if (bits >> j) & 1 else lam_lo[gi, i]
            if have_prev:
                near_a = abs(prev_g) <= _G_ZERO_TOL
                near_b = abs(g) <= _G_ZERO_TOL
                b_lo = prev_b * (1.0 - 1e-12)
                b_hi = grid[gi] * (1.0 + 1e-12)
                if near_a and near_b:
                    if not in_flat:
                        count = _polish_verify_store(
                            prev_b, b_lo, b_hi, bits, pos, n_pos, d, d_total,
                            out_b, out_lam, out_bits, count)
                    in_flat = True
                else:
                    if near_a and not in_flat:
                        count = _polish_verify_store(
                            prev_b, b_lo, b_hi, bits, pos, n_pos, d, d_total,
                            out_b, out_lam, out_bits, count)
                    elif near_b and gi == G - 1:
                        count = _polish_verify_store(
                            grid[gi], b_lo, b_hi, bits, pos, n_pos, d, d_total,
                            out_b, out_lam, out_bits, count)
                    elif not near_a and not near_b and (prev_g > 0.0) != (g > 0.0):
                        root = _bisect_g_root(prev_b, prev_g, grid[gi], g,
                                              bits, pos, n_pos, d, d_total)
                        count = _polish_verify_store(
                            root, b_lo, b_hi, bits, pos, n_pos, d, d_total,
                            out_b, out_lam, out_bits, count)
                    in_flat = False
                if count > out_b.size:
                    return count
            have_prev = True
            prev_b = grid[gi]
            prev_g = g
    return count


@njit(cache=True)
def _profile_f_kernel(B, lam, d, d_total):
    K, R = d.shape
    f = -(R - 1) * d_total * np.log(B)
    for i in range(K):
        for r in range(R):
            if d[i, r] > 0.0:
                f += d[i, r] * np.log(lam[i] + d[i, r])
    return f


@njit(cache=True)
def fit_kernel(p_agree, d, d_total, n_grid, b_cap, out_b, out_lam, out_bits):
    """Scan, dedupe, and rank in one compiled pass.

    Returns (status, B, best_index) with status 1 on success, 0 when no
    candidate exists (degenerate), and -1 on candidate overflow.  The
    winning lambdas are left in ``out_lam[best_index]``.
    """
    K, R = d.shape
    pos = np.empty(K, np.int64)
    n_pos = 0
    for i in range(K):
        allpos = True
        for r in range(R):
            if d[i, r] <= 0.0:
                allpos = False
                break
        if allpos:
            pos[n_pos] = i
            n_pos += 1
    d_max = 1e-12
    for i in range(K):
        for r in range(R):
            if d[i, r] > d_max:
                d_max = d[i, r]
    b_lo = d_max * (1.0 - 1e-12)
    if b_lo >= b_cap:
        return 0, 0.0, 0
    count = _scan(d, d_total, b_lo, b_cap, n_grid, pos, n_pos,
                  out_b, out_lam, out_bits)
    if count > out_b.size:
        return -1, 0.0, 0
    if count == 0:
        return 0, 0.0, 0
    # dedupe by B (ascending), then pick the best profile likelihood with
    # smaller-B tie-breaking
    order = np.argsort(out_b[:count])
    best = -1
    best_f = -np.inf
    best_b = 0.0
    last_b = -1.0
    for k in range(count):
        j = order[k]
        bj = out_b[j]
        nan_lam = False
        for i in range(K):
            if np.isnan(out_lam[j, i]):
                nan_lam = True
                break
        if nan_lam:
            continue
        if last_b >= 0.0 and abs(bj - last_b) <= _B_DEDUPE * (1.0 + bj):
            continue
        last_b = bj
        f = _profile_f_kernel(bj, out_lam[j], d, d_total)
        if best < 0 or f > best_f + _F_TIE:
            best = j
            best_f = f
            best_b = bj
    if best < 0:
        return 0, 0.0, 0
    return 1, best_b, best


def scan_candidates(
    d: np.ndarray,
    d_total: float,
    *,
    grid_points: int = 512,
    b_cap: float = 1e3,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All roots of g(B) over every root branch, as (B, lambda, branch) arrays.

    The scan is restricted to B in [max d, b_cap]: below the largest
    disagreement proportion the implied response probabilities could not
    sum to one, so no root exists there.
    """
    d = np.ascontiguousarray(d, dtype=np.float64)
    K, R = d.shape
    pos = np.array([i for i in range(K) if np.all(d[i] > 0.0)], dtype=np.int64)
    n_pos = pos.size
    if n_pos > MAX_BRANCH_CATEGORIES:
        raise ValueError(
            f"{n_pos} categories have all-positive disagreements; branch "
            f"enumeration is capped at {MAX_BRANCH_CATEGORIES}"
        )
    if pos.size == 0:
        pos = np.zeros(1, dtype=np.int64)  # placate fixed-arity kernels
    b_lo = max(float(d.max()), 1e-12) * (1.0 - 1e-12)
    if b_lo >= b_cap:
        return np.empty(0), np.empty((0, K)), np.empty(0, dtype=np.int64)
    out_b = np.empty(MAX_CANDIDATES)
    out_lam = np.empty((MAX_CANDIDATES, K))
    out_bits = np.empty(MAX_CANDIDATES, dtype=np.int64)
    count = _scan(d, float(d_total), b_lo, float(b_cap), int(grid_points),
                  pos, n_pos, out_b, out_lam, out_bits)
    if count > MAX_CANDIDATES:
        raise ValueError("candidate overflow: more roots than the solver can store")
    keep = ~np.isnan(out_lam[:count]).any(axis=1)
    return out_b[:count][keep], out_lam[:count][keep], out_bits[:count][keep]
