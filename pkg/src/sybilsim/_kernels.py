"""Hot inner loop of the window-priced adversary flood.

The loop is exact per-event semantics (no batching approximation): each
join is scheduled at the earliest instant the unspent budget covers the
current price, where the price is one plus the count of join events in
the trailing window.  Segment scanning over window-entry expiries mirrors
the pure-Python scheduler bit for bit, including its one-ulp progress
nudge, so results do not depend on which path produced them.

For a non-retaining adversary the purge that a flood triggers is also
mechanical (every bad ID is evicted, the committee draw is skipped
because no bad ID can be sampled), so purges, their per-iteration cost
rows, and their sample rows are handled inline; the kernel exits to
Python only on estimator triggers, exhausted scratch space, or the end
of the span.

Compiled with numba when available; the plain-Python fallback is the
same function object and validates the compiled version in tests.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly everywhere
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# integer state indices
I_SPENT = 0
I_ATTEMPTS = 1
I_ADMITTED = 2
I_NA = 3
I_ND = 4
I_DIFF = 5
I_SYM = 6
I_NWIN = 7
I_GEOM = 8
I_PENDING = 9
I_CARRIED = 10
I_SPREV = 11
I_ALG_ENT = 12  # constant inside the kernel (good entrances are Python-side)
I_ALG_PUR = 13
I_ADV_ENT = 14
I_ADV_PUR = 15  # constant: a non-retaining adversary never pays purges
I_NGOOD = 16  # constant: no good events inside a span
I_NBAD = 17
I_BADGEN = 18  # live bad stamped with the current estimator generation
I_ITER = 19
I_GOODJ = 20  # good joins of the open iteration (accrued Python-side)
I_BADJ = 21
I_ROWN = 22
I_SMPN = 23
I_JOINS = 24  # admitted joins this call (cohort/counter bookkeeping)
I_PURGES = 25
N_INTS = 26

# float state indices
F_T = 0
F_T1 = 1
F_W = 2
F_RATE = 3
F_JG = 4
F_RBH = 5
F_MARGIN = 6
F_ITER_START = 7
F_LIMIT = 8
F_JG_ITER_START = 9
F_JG_ITER_MAX = 10
N_FLTS = 11

# return reasons
DONE = 0
PURGE = 1  # purge due but not inline-capable (retaining adversary)
ESTIMATE = 2
WINDOW_FULL = 3
GEOMS_EMPTY = 4
ROWS_FULL = 5

# purge rules
RULE_EVENTS = 1
RULE_SYMDIFF = 2
RULE_BOUND = 3


def _flood_window(
    buf, ints, flts, marks, it_out, smp_out, geoms,
    rule, track_est, track_sym, h3, purge_inline,
):
    spent = ints[I_SPENT]
    attempts = ints[I_ATTEMPTS]
    admitted = ints[I_ADMITTED]
    n_a = ints[I_NA]
    n_d = ints[I_ND]
    diff = ints[I_DIFF]
    sym = ints[I_SYM]
    nwin = ints[I_NWIN]
    geom_i = ints[I_GEOM]
    pending = ints[I_PENDING]
    carried = ints[I_CARRIED]
    s_prev = ints[I_SPREV]
    alg_ent = ints[I_ALG_ENT]
    alg_pur = ints[I_ALG_PUR]
    adv_ent = ints[I_ADV_ENT]
    adv_pur = ints[I_ADV_PUR]
    n_good = ints[I_NGOOD]
    n_bad = ints[I_NBAD]
    bad_gen = ints[I_BADGEN]
    iteration = ints[I_ITER]
    good_j = ints[I_GOODJ]
    bad_j = ints[I_BADJ]
    rown = ints[I_ROWN]
    smpn = ints[I_SMPN]
    joins = ints[I_JOINS]
    purges = ints[I_PURGES]

    t = flts[F_T]
    t1 = flts[F_T1]
    w = flts[F_W]
    rate = flts[F_RATE]
    jg = flts[F_JG]
    rbh = flts[F_RBH]
    margin = flts[F_MARGIN]
    iter_start = flts[F_ITER_START]
    limit = flts[F_LIMIT]
    jg_it_start = flts[F_JG_ITER_START]
    jg_it_max = flts[F_JG_ITER_MAX]

    cap = buf.shape[0]
    row_cap = it_out.shape[0]
    smp_cap = smp_out.shape[0]
    exp = int(np.searchsorted(buf[:nwin], t - w, side="right"))
    inf = np.inf
    reason = DONE

    while True:
        if nwin >= cap:
            reason = WINDOW_FULL
            break
        # earliest affordable attempt: prices step down at entry expiries
        seg = t
        found = False
        t_att = 0.0
        price = 0
        while seg < t1:
            x = seg - w
            while exp < nwin and buf[exp] <= x:
                exp += 1
            p = 1 + (nwin - exp)
            aff = (spent + p) / rate
            t_aff = seg if aff < seg else aff
            e = buf[exp] + w if exp < nwin else t1
            seg_end = e if e < t1 else t1
            if t_aff < seg_end:
                t_att = t_aff
                price = p
                found = True
                break
            nxt = np.nextafter(seg, inf)
            seg = seg_end if seg_end > nxt else nxt
        if not found:
            t = t1
            reason = DONE
            break

        if h3:
            if pending <= 0:
                if geom_i >= geoms.shape[0]:
                    reason = GEOMS_EMPTY
                    break
                pending = geoms[geom_i]
                geom_i += 1
            spent += price
            attempts += 1
            pending -= 1
            t = t_att
            if pending > 0:
                continue  # classifier refused; work forfeited
        else:
            spent += price
            attempts += 1

        buf[nwin] = t_att
        nwin += 1
        admitted += 1
        adv_ent += price
        joins += 1
        n_a += 1
        n_bad += 1
        bad_gen += 1
        bad_j += 1
        if track_est:
            diff += 1
        if track_sym:
            sym += 1
        t = t_att
        size = n_good + n_bad

        if track_est and 5 * diff >= 3 * size:
            reason = ESTIMATE
            break

        purge_due = False
        if rule == RULE_EVENTS:
            purge_due = 11 * (n_a + n_d) >= s_prev
        elif rule == RULE_SYMDIFF:
            purge_due = 11 * sym >= s_prev
        elif rule == RULE_BOUND:
            elapsed = t_att - iter_start
            credit = np.floor(elapsed * jg / rbh)
            suspects = n_a - credit
            if suspects < 0.0:
                suspects = 0.0
            bound = (carried + suspects) / size
            purge_due = bound + margin >= limit
        if not purge_due:
            continue
        if not purge_inline:
            reason = PURGE
            break
        if rown >= row_cap or smpn >= smp_cap:
            reason = ROWS_FULL
            break

        # inline purge: evict all bad, charge the good side, close the row
        if track_est:
            diff -= bad_gen
        n_bad = 0
        bad_gen = 0
        alg_pur += n_good
        it_out[rown, 0] = iteration
        it_out[rown, 1] = iter_start
        it_out[rown, 2] = t_att - iter_start
        it_out[rown, 3] = s_prev
        it_out[rown, 4] = n_good
        it_out[rown, 5] = n_a
        it_out[rown, 6] = n_d
        it_out[rown, 7] = good_j
        it_out[rown, 8] = bad_j
        it_out[rown, 9] = alg_ent - marks[0]
        it_out[rown, 10] = alg_pur - marks[1]
        it_out[rown, 11] = adv_ent - marks[2]
        it_out[rown, 12] = adv_pur - marks[3]
        it_out[rown, 13] = spent - marks[4]
        it_out[rown, 14] = jg_it_start
        it_out[rown, 15] = jg_it_max
        it_out[rown, 16] = 1.0
        rown += 1
        marks[0] = alg_ent
        marks[1] = alg_pur
        marks[2] = adv_ent
        marks[3] = adv_pur
        marks[4] = spent
        iteration += 1
        n_a = 0
        n_d = 0
        good_j = 0
        bad_j = 0
        carried = 0
        sym = 0
        s_prev = n_good
        iter_start = t_att
        jg_it_start = jg
        jg_it_max = jg
        purges += 1
        smp_out[smpn, 0] = t_att
        smp_out[smpn, 1] = n_good
        smp_out[smpn, 2] = 0.0
        smp_out[smpn, 3] = jg
        smp_out[smpn, 4] = alg_ent + alg_pur
        smp_out[smpn, 5] = spent
        smpn += 1
        if track_est and n_good > 0 and 5 * diff >= 3 * n_good:
            reason = ESTIMATE
            break

    ints[I_SPENT] = spent
    ints[I_ATTEMPTS] = attempts
    ints[I_ADMITTED] = admitted
    ints[I_NA] = n_a
    ints[I_ND] = n_d
    ints[I_DIFF] = diff
    ints[I_SYM] = sym
    ints[I_NWIN] = nwin
    ints[I_GEOM] = geom_i
    ints[I_PENDING] = pending
    ints[I_CARRIED] = carried
    ints[I_SPREV] = s_prev
    ints[I_ALG_PUR] = alg_pur
    ints[I_ADV_ENT] = adv_ent
    ints[I_NBAD] = n_bad
    ints[I_BADGEN] = bad_gen
    ints[I_ITER] = iteration
    ints[I_GOODJ] = good_j
    ints[I_BADJ] = bad_j
    ints[I_ROWN] = rown
    ints[I_SMPN] = smpn
    ints[I_JOINS] = joins
    ints[I_PURGES] = purges
    flts[F_T] = t
    flts[F_ITER_START] = iter_start
    flts[F_JG_ITER_START] = jg_it_start
    flts[F_JG_ITER_MAX] = jg_it_max
    return reason


flood_window_py = _flood_window
flood_window = njit(cache=True)(_flood_window) if HAVE_NUMBA else _flood_window
