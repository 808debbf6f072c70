"""Ground-truth analysis: epoch detection, churn-assumption measurement,
and numeric validation of the proved cost and estimation bounds.

Everything here sees ground truth (good/bad labels, the full trace) and
runs over completed simulation records; defenses never import this
module.  Epochs are periods over which the good membership turns over by
a 3/4 fraction; the two churn assumptions bound epoch-to-epoch drift of
the good join rate (A1) and intra-epoch burstiness over any window
holding at least two good joins (A2).

Checker conventions:

* The per-iteration good join rate is the time-weighted blend of epoch
  rates over the iteration's span (the object the proofs bound); a raw
  count/length ratio is undefined on the sub-second iterations a heavy
  flood produces.
* Zero-length iterations (instantaneous burst purges) have no defined
  rates and are skipped; their costs still appear in the ledgers.
* Aggregated iteration rows (identical unit-price purge cycles) are
  checked in aggregate where the inequality sums cleanly (the average
  spend bound) and skipped otherwise.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .churn import DEPART, JOIN, ChurnTrace, validate


class InsufficientDataError(ValueError):
    """Not enough completed epochs to measure the requested quantity."""


# =====================================================================
# Epochs
# =====================================================================


@dataclass
class EpochAnalysis:
    """Completed epoch boundaries, per-epoch good join rates, snapshots.

    ``boundaries`` holds the end time of each completed epoch (epoch 1
    starts at time 0).  ``join_times`` holds the good join timestamps
    inside each completed epoch.  ``good_sets`` holds the membership
    snapshot at each boundary when requested (index 0 is the initial
    set).  The open final epoch is summarized by ``partial_rate`` over
    [last boundary, trace end].
    """

    boundaries: list[float] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    join_times: list[np.ndarray] = field(default_factory=list)
    good_sets: list[frozenset] | None = None
    trace_end: float = 0.0
    partial_rate: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.boundaries)

    def rate_knots(self) -> tuple[np.ndarray, np.ndarray]:
        """(segment start times, rates) as a step function over [0, end]."""
        starts = np.concatenate([[0.0], np.asarray(self.boundaries)])
        rates = np.asarray(list(self.rates) + [self.partial_rate])
        return starts, rates


def detect_epochs(trace: ChurnTrace, keep_sets: bool = False) -> EpochAnalysis:
    """Scan good membership and close an epoch at each 3/4 turnover.

    A member departing and rejoining counts as a fresh member, so
    turnover never un-counts.  The boundary is placed at the first event
    where the members not present at the previous boundary reach 3/4 of
    the current membership.  Time-0 joins are the initial population and
    are not epoch-1 joins.
    """
    validate(trace)
    ep = EpochAnalysis(trace_end=trace.duration())
    if keep_sets:
        ep.good_sets = []

    live: dict[str, int] = {}  # ident -> incarnation
    gen: dict[tuple[str, int], bool] = {}  # token -> joined after boundary
    n_live = 0
    n_new = 0
    epoch_start = 0.0
    joins: list[float] = []

    for ev in trace.events:
        if ev.kind == JOIN:
            inc = live.get(ev.ident)
            inc = 0 if inc is None else inc + 1
            live[ev.ident] = inc
            if ev.time == 0.0:
                gen[(ev.ident, inc)] = False
                n_live += 1
                continue
            gen[(ev.ident, inc)] = True
            n_live += 1
            n_new += 1
            joins.append(ev.time)
        else:
            inc = live.pop(ev.ident)
            if gen.pop((ev.ident, inc)):
                n_new -= 1
            n_live -= 1
        if n_new > 0 and n_live > 0 and 4 * n_new >= 3 * n_live:
            length = ev.time - epoch_start
            ep.boundaries.append(ev.time)
            ep.rates.append(len(joins) / length)
            ep.join_times.append(np.asarray(joins))
            if keep_sets is True and ep.good_sets is not None:
                ep.good_sets.append(frozenset(gen.keys()))
            joins = []
            epoch_start = ev.time
            n_new = 0
            for tok in gen:
                gen[tok] = False

    tail = ep.trace_end - epoch_start
    ep.partial_rate = (len(joins) / tail) if tail > 0 else 0.0
    if not ep.boundaries:
        ep.warnings.append("trace too short for one epoch")
    return ep


def good_rate_over_spans(
    ep: EpochAnalysis, starts: np.ndarray, ends: np.ndarray
) -> np.ndarray:
    """Time-weighted epoch-rate blend over [start, end) spans.

    Integrates the stepwise ground-truth rate (complete epochs plus the
    open final epoch) and divides by the span length.  Spans must have
    positive length.
    """
    knots, rates = ep.rate_knots()
    edges = np.concatenate([knots, [max(ep.trace_end, float(np.max(ends)) + 1.0)]])
    cum = np.concatenate([[0.0], np.cumsum(rates * np.diff(edges))])

    def integral(t):
        t = np.clip(t, edges[0], edges[-1])
        i = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(rates) - 1)
        return cum[i] + rates[i] * (t - edges[i])

    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    return (integral(ends) - integral(starts)) / (ends - starts)


# =====================================================================
# Assumption constants
# =====================================================================


def measure_a1(ep: EpochAnalysis) -> tuple[float, float]:
    """Extremes of consecutive epoch-rate ratios."""
    if ep.count < 2:
        raise InsufficientDataError("need at least 2 completed epochs for A1")
    r = np.asarray(ep.rates)
    ratios = r[1:] / r[:-1]
    return float(ratios.min()), float(ratios.max())


def measure_a2(
    ep: EpochAnalysis,
    min_window: float = 2.0,
    exact_limit: int = 2000,
    n_random_pairs: int = 10000,
    seed: int = 0,
) -> tuple[float, float]:
    """Extremes of window rate over epoch rate, across join-pair windows.

    A window is delimited by two good joins inside one epoch; its rate is
    the number of joins it spans divided by its length.  Windows shorter
    than ``min_window`` are excluded: measured traces carry second-
    granularity timestamps, so sub-second pair windows are artifacts of
    the continuous-time generator rather than measurable burstiness.
    Epochs with more than ``exact_limit`` joins are subsampled: all
    adjacent pairs (which realize both extremes: dense clusters and the
    longest gaps), the full span, and a seeded batch of random pairs.
    """
    lo, hi = math.inf, -math.inf
    rng = np.random.default_rng(seed)
    measured = False
    for j, times in enumerate(ep.join_times):
        k = times.size
        if k < 2:
            ep.warnings.append(f"epoch {j + 1} has fewer than 2 joins; skipped")
            continue
        rho = ep.rates[j]
        if k <= exact_limit:
            pairs_lo, pairs_hi = _pair_extremes_exact(times, min_window)
        else:
            pairs_lo, pairs_hi = _pair_extremes_sampled(
                times, min_window, n_random_pairs, rng
            )
        if pairs_lo is None:
            ep.warnings.append(f"epoch {j + 1} has no window of length >= {min_window}")
            continue
        measured = True
        lo = min(lo, pairs_lo / rho)
        hi = max(hi, pairs_hi / rho)
    if not measured:
        raise InsufficientDataError("no epoch provided a measurable window")
    return float(lo), float(hi)


def _pair_extremes_exact(times: np.ndarray, min_window: float):
    lo, hi = math.inf, -math.inf
    k = times.size
    found = False
    for i in range(k - 1):
        spans = times[i + 1 :] - times[i]
        ok = spans >= min_window
        if not ok.any():
            continue
        found = True
        counts = np.arange(2, k - i + 1, dtype=float)[ok]
        rates = counts / spans[ok]
        lo = min(lo, float(rates.min()))
        hi = max(hi, float(rates.max()))
    return (lo, hi) if found else (None, None)


def _pair_extremes_sampled(times, min_window, n_random, rng):
    k = times.size
    i_adj = np.arange(k - 1)
    cand_i = [i_adj, np.asarray([0])]
    cand_j = [i_adj + 1, np.asarray([k - 1])]
    ri = rng.integers(0, k - 1, size=n_random)
    rj = rng.integers(0, k - 1, size=n_random)
    cand_i.append(np.minimum(ri, rj))
    cand_j.append(np.maximum(ri, rj) + 1)
    i = np.concatenate(cand_i)
    j = np.concatenate(cand_j)
    spans = times[j] - times[i]
    ok = spans >= min_window
    if not ok.any():
        return None, None
    rates = (j[ok] - i[ok] + 1).astype(float) / spans[ok]
    return float(rates.min()), float(rates.max())


@dataclass(frozen=True)
class AssumptionConstants:
    """A1/A2 envelope plus the derived estimation and cost constants.

    Lows are clamped to at most 1 and highs to at least 1, so the
    envelope always contains a flat-rate trace.
    """

    a1_low: float
    a1_high: float
    a2_low: float
    a2_high: float

    @property
    def c_je_low(self) -> float:
        return (5.0 / 6.0) * self.a1_low**2 * self.a2_low / self.a1_high

    @property
    def c_je_high(self) -> float:
        return 5.0 * self.a1_high**2 * self.a2_high / self.a1_low

    @property
    def d1(self) -> float:
        return math.sqrt(2.0 * self.c_je_high)

    @property
    def d2(self) -> float:
        return 12.0 / 11.0 + self.a1_high * self.a2_high / (11.0 * self.c_je_low)

    @classmethod
    def from_measurements(cls, a1: tuple[float, float], a2: tuple[float, float]):
        return cls(
            a1_low=min(a1[0], 1.0),
            a1_high=max(a1[1], 1.0),
            a2_low=min(a2[0], 1.0),
            a2_high=max(a2[1], 1.0),
        )


# Published per-network assumption envelopes, used as checker inputs when
# a generous, trace-independent envelope is wanted (e.g. the cost-bound
# checkers, whose good-entrance term presumes good-dominated windows and
# is too tight under heavy floods if fitted to a single quiet trace).
NETWORK_ENVELOPES = {
    "bitcoin_trace": AssumptionConstants(0.1, 10.0, 0.0005, 30.0),
    "bittorrent": AssumptionConstants(0.125, 8.0, 0.067, 15.0),
    "ethereum": AssumptionConstants(0.5, 2.0, 0.4, 2.0),
    "gnutella": AssumptionConstants(0.5, 2.0, 0.1, 4.0),
}


# =====================================================================
# Checkers
# =====================================================================


@dataclass
class CheckReport:
    name: str
    passed: bool
    checked: int
    skipped: int = 0
    violations: list[tuple] = field(default_factory=list)
    worst_margin: float | None = None  # min of (bound - value); >= 0 iff passed

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: checked={self.checked} skipped={self.skipped}"
            f" worst_margin={self.worst_margin!r} violations={len(self.violations)}"
        )


def _iteration_arrays(result):
    it = result.iterations
    return (
        it["iteration"],
        it["start"].astype(float),
        it["length"].astype(float),
        it["count"],
    )


def check_theorem1(result, ep: EpochAnalysis, ac: AssumptionConstants) -> CheckReport:
    """Estimate bracket: c_low * J_i <= estimate_i <= c_high * J_i.

    ``estimate_i`` is the rate estimate in force when iteration i began;
    J_i is the epoch-blend good join rate over the iteration's span.
    """
    it = result.iterations
    idx, start, length, count = _iteration_arrays(result)
    jg = it["jg_start"].astype(float)
    ok = (length > 0) & (count == 1)
    rep = CheckReport("theorem1_bracket", True, 0, skipped=int((~ok).sum()))
    if not ok.any():
        return rep
    J = good_rate_over_spans(ep, start[ok], start[ok] + length[ok])
    est = jg[ok]
    usable = J > 0
    rep.skipped += int((~usable).sum())
    J, est = J[usable], est[usable]
    ids = idx[ok][usable]
    lo = ac.c_je_low * J
    hi = ac.c_je_high * J
    bad = (est < lo) | (est > hi)
    rep.checked = int(J.size)
    margins = np.minimum(est - lo, hi - est)
    rep.worst_margin = float(margins.min()) if J.size else None
    if bad.any():
        rep.passed = False
        for i in np.nonzero(bad)[0][:32]:
            rep.violations.append((int(ids[i]), float(est[i]), float(lo[i]), float(hi[i])))
    return rep


def check_theorem2(result, ac: AssumptionConstants) -> CheckReport:
    """Run-level spend bound A <= 11*d2*(d1*sqrt(2T(c_high*J + 1)) + J)."""
    dur = result.duration
    rep = CheckReport("theorem2_spend_bound", True, 0)
    if dur <= 0:
        rep.skipped = 1
        return rep
    A = result.ledger.algorithmic_total / dur
    T = result.adversary.spent / dur
    J = result.good_joins / dur
    bound = 11.0 * ac.d2 * (ac.d1 * math.sqrt(2.0 * T * (ac.c_je_high * J + 1.0)) + J)
    rep.checked = 1
    rep.worst_margin = bound - A
    if A > bound:
        rep.passed = False
        rep.violations.append((A, bound))
    return rep


def check_lemma_joinbad(result) -> CheckReport:
    """Per-iteration bad join rate against the flood-cost partition bound.

    The adversary's spend in an iteration is at least half the sum of
    squared per-sub-iteration join counts, over ceil(estimate * length)
    sub-iterations (at least one), which bounds the bad join rate by

        sqrt(2 * T_i * ceil(estimate_i * len_i) / len_i).

    For iterations of at least one second this is within the commonly
    quoted sqrt(2 * T_i * (estimate_i + 1)) form, which is additionally
    asserted there; iterations shorter than one sub-iteration carry the
    1/len_i factor instead (a cold-window burst saturates the bound).
    ``T_i`` is the realized work rate, including work forfeited to an
    admission classifier; the estimate is the largest value in force
    during the iteration.
    """
    it = result.iterations
    idx, start, length, count = _iteration_arrays(result)
    ok = (length > 0) & (count == 1)
    rep = CheckReport("lemma_joinbad", True, 0, skipped=int((~ok).sum()))
    if not ok.any():
        return rep
    ell = length[ok]
    jb = it["bad_joins"][ok].astype(float) / ell
    ti = it["adv_work"][ok].astype(float) / ell
    jg = np.maximum(it["jg_start"][ok], it["jg_max"][ok]).astype(float)
    nsub = np.maximum(np.ceil(jg * ell), 1.0)
    bound = np.sqrt(2.0 * ti * nsub / ell)
    second_form = np.sqrt(2.0 * ti * (jg + 1.0))
    bad = (jb > bound) | ((ell >= 1.0) & (jb > second_form))
    rep.checked = int(jb.size)
    rep.worst_margin = float((bound - jb).min())
    if bad.any():
        rep.passed = False
        for i in np.nonzero(bad)[0][:32]:
            rep.violations.append((int(idx[ok][i]), float(jb[i]), float(bound[i])))
    return rep


def check_lemma_algcost(result, ac: AssumptionConstants) -> CheckReport:
    """Average-spend bound per iteration: alg_i * len_i <= d2 * |S_prev|.

    Checked in the multiplied form, which is division-free and therefore
    also covers zero-length iterations; aggregated rows check against
    d2 * count * |S_prev| since every cycle in the block is identical.
    """
    it = result.iterations
    idx, start, length, count = _iteration_arrays(result)
    alg = (it["alg_entrance"] + it["alg_purge"]).astype(float)
    bound = ac.d2 * it["s_prev"].astype(float) * count.astype(float)
    ok = idx > 1
    rep = CheckReport("lemma_algcost", True, int(ok.sum()), skipped=int((~ok).sum()))
    if not ok.any():
        return rep
    bad = alg[ok] > bound[ok]
    rep.worst_margin = float((bound[ok] - alg[ok]).min())
    if bad.any():
        rep.passed = False
        for i in np.nonzero(bad)[0][:32]:
            rep.violations.append((int(idx[ok][i]), float(alg[ok][i]), float(bound[ok][i])))
    return rep


def members_at(trace: ChurnTrace, t: float, exclude: set[str] | None = None) -> frozenset:
    """Good membership (as fresh-per-join tokens) right after time t."""
    exclude = exclude or set()
    live: dict[str, int] = {}
    out: set[tuple[str, int]] = set()
    for ev in trace.events:
        if ev.time > t:
            break
        if ev.ident in exclude:
            continue
        if ev.kind == JOIN:
            inc = live.get(ev.ident)
            inc = 0 if inc is None else inc + 1
            live[ev.ident] = inc
            out.add((ev.ident, inc))
        else:
            out.discard((ev.ident, live[ev.ident]))
    return frozenset(out)


def check_corollary_windows(result, ac: AssumptionConstants, windows, trace: ChurnTrace) -> CheckReport:
    """Windowed spend bound over contiguous iterations starting after 1.

    Bound: 11*d2*(2*Delta + d1*sqrt(2*T_I*(c_high*J_I + 1)) + J_I), with
    Delta the set difference of memberships at the window's two ends over
    the window length.  Requires a non-retaining adversary (bad IDs are
    gone at every iteration end, so membership reconstructs from the good
    trace) and per-iteration (non-aggregated) records.
    """
    if result.config.adversary.pays_purge:
        raise ValueError("window checker requires a non-retaining adversary")
    it = result.iterations
    idx = it["iteration"]
    count = it["count"]
    rep = CheckReport("corollary_windows", True, 0)
    rejected = set(getattr(result, "rejected_ids", ()) or ())
    for (x, y) in windows:
        if x <= 1:
            raise ValueError("window must start after iteration 1")
        sel = (idx >= x) & (idx <= y)
        if not sel.any() or (count[sel] != 1).any():
            rep.skipped += 1
            continue
        length = float(it["length"][sel].sum())
        if length <= 0:
            rep.skipped += 1
            continue
        A = float((it["alg_entrance"][sel] + it["alg_purge"][sel]).sum()) / length
        T = float(it["adv_work"][sel].sum()) / length
        J = float(it["good_joins"][sel].sum()) / length
        t_x = float(it["start"][sel][0])  # end of iteration x-1 == start of x
        rows_y = np.nonzero(sel)[0]
        t_y = float(it["start"][rows_y[-1]] + it["length"][rows_y[-1]])
        s_x = members_at(trace, t_x, rejected)
        s_y = members_at(trace, t_y, rejected)
        delta = len(s_x - s_y) / length
        bound = 11.0 * ac.d2 * (
            2.0 * delta + ac.d1 * math.sqrt(2.0 * T * (ac.c_je_high * J + 1.0)) + J
        )
        rep.checked += 1
        margin = bound - A
        rep.worst_margin = margin if rep.worst_margin is None else min(rep.worst_margin, margin)
        if A > bound:
            rep.passed = False
            rep.violations.append(((x, y), A, bound))
    return rep


def check_interval_epochs(result, ep: EpochAnalysis) -> CheckReport:
    """Each completed estimator interval touches at most two epochs and
    never fully contains one."""
    bounds = np.asarray(ep.boundaries)
    rep = CheckReport("interval_epochs", True, 0)
    for (a, b, _jg) in result.intervals:
        rep.checked += 1
        inside = int(np.searchsorted(bounds, b, side="right")) - int(
            np.searchsorted(bounds, a, side="left")
        )
        # `inside` counts epoch boundaries within [a, b]; two or more
        # consecutive boundaries inside means a whole epoch is contained.
        touched = inside + 1
        if touched > 2 or inside >= 2:
            rep.passed = False
            rep.violations.append((a, b, touched))
    return rep


def sum_squares_lower_bound(values) -> bool:
    """Algebraic fact behind the flood-cost argument: for non-negative
    s_1..s_n, sum(s_i^2) >= (sum s_i)^2 / n."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        return True
    return bool(np.sum(v * v) >= (np.sum(v) ** 2) / n - 1e-9 * max(1.0, np.sum(v * v)))
