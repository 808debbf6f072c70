"""Deterministic event-driven simulation kernel.

Orders and dispatches join, depart, periodic-test, and adversary-injection
events to a pluggable defense, keeping exact integer cost ledgers.  Two
interchangeable backends implement the protocol state:

* ``reference``: literal sets and per-event processing, readable as the
  protocol definition (see :mod:`sybilsim.togcom`).
* ``fast``: counter- and cohort-based state with closed-form batching of
  adversary floods, so runs with billions of puzzle units per second
  finish in seconds.

Both backends are exact: batch arithmetic reproduces the per-event join
times, prices, and trigger points bit for bit (asserted by the
equivalence tests), with one documented exception: under constant unit
pricing the fast backend aggregates identical purge cycles and then skips
the per-purge committee draw and sample row inside an aggregated block.

Ordering rules: events are processed in (time, seq) order; adversary
injections scheduled at a time t sort after trace events at t.  Purges
and estimator updates happen inline at the event that reaches their
threshold.  Trace events after the configured end time are ignored.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .adversary import (
    BURST,
    AdversaryConfig,
    AdversaryLedger,
    purge_retention,
)
from .baselines import (
    GMComState,
    gmcom_after_join,
    gmcom_close_iteration,
    gmcom_price_at,
)
from .churn import JOIN, ChurnTrace, ConfigError, validate
from . import _kernels as kern
from .heuristics import (
    POPULATION_LIMIT,
    HeuristicConfig,
    h1_purge_due,
    h1_purge_due_counts,
    h2_bad_upper_bound,
    h2_purge_due,
    h3_admit,
)
from . import togcom
from .togcom import (
    Committee,
    CostLedger,
    EstimatorState,
    IterationRow,
    SystemState,
    ValidationError,
    committee_size,
)

# Event kinds
JOIN_GOOD = "join_good"
JOIN_BAD = "join_bad"
DEPART_EV = "depart"
PERIODIC_TICK = "periodic_tick"

# Pricing models
WINDOW = "window"
UNIT = "unit"
RATIO = "ratio"

_BATCH_MIN = 16  # below this expected flood density, per-event is cheaper
_CHUNK = 65536


class EngineError(RuntimeError):
    """Internal invariant breached (e.g. pruned history was needed)."""


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: str
    ident: str | None = None


@dataclass(frozen=True)
class DefensePolicy:
    name: str
    pricing: str
    purges: bool
    estimator: bool
    heuristics: HeuristicConfig
    periodic_test: bool = False


@dataclass(frozen=True)
class SimConfig:
    """One run's full parameterization; identical configs replay exactly."""

    t_end: float
    seed: int = 0
    defense: str = "togcom"
    alpha: float = 1.0 / 18.0
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    heuristics: HeuristicConfig = field(default_factory=HeuristicConfig)
    jg0: float | None = None
    warmup_seconds: float = 100.0
    c_comm: float = 3.0
    test_period: float = 5.0
    test_cost: int = 1
    gmcom_failure_factor: float = 10.0
    gmcom_jg0: float | None = None
    sample_period: float = 1.0
    backend: str = "fast"

    def check(self) -> None:
        if self.t_end < 0:
            raise ConfigError("t_end must be non-negative")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if self.sample_period <= 0:
            raise ConfigError("sample_period must be positive")
        if self.backend not in ("fast", "reference"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        self.adversary.check()
        self.heuristics.check()


def resolve_policy(config: SimConfig) -> DefensePolicy:
    """Map a defense selector to its pricing/purge/estimator behavior."""
    name = config.defense
    h = config.heuristics
    none = HeuristicConfig()
    if name == "togcom":
        return DefensePolicy(name, WINDOW, True, True, none)
    if name == "tgch":
        return DefensePolicy(
            name, WINDOW, True, True, replace(h, h1=True, h2=True, h3_accuracy=0.0)
        )
    if name in ("tgch_sf", "tgch_sf92", "tgch_sf98"):
        acc = {"tgch_sf92": 0.92, "tgch_sf98": 0.98}.get(name, h.h3_accuracy)
        if not 0.0 < acc <= 1.0:
            raise ConfigError("tgch_sf requires h3_accuracy in (0, 1]")
        return DefensePolicy(
            name, WINDOW, True, True, replace(h, h1=True, h2=True, h3_accuracy=acc)
        )
    if name == "ccom":
        return DefensePolicy(name, UNIT, True, False, none)
    if name == "gmcom":
        return DefensePolicy(name, RATIO, True, False, none)
    if name == "sybilcontrol":
        return DefensePolicy(name, UNIT, False, False, none, periodic_test=True)
    if name == "remp":
        raise ConfigError(
            "remp is a closed-form cost model; evaluate it via "
            "baselines.remp_spend_rate or the experiment runner"
        )
    raise ConfigError(f"unknown defense selector {name!r}")


# =====================================================================
# Result recording
# =====================================================================

_ITER_FIELDS = (
    "iteration",
    "start",
    "length",
    "s_prev",
    "size_end",
    "n_a",
    "n_d",
    "good_joins",
    "bad_joins",
    "alg_entrance",
    "alg_purge",
    "adv_entrance",
    "adv_purge",
    "adv_work",
    "jg_start",
    "jg_max",
    "count",
)


class Recorder:
    """Collects samples, per-iteration records, intervals, violations.

    Rows arrive either one at a time (Python paths) or as array blocks
    (the flood kernel); order is preserved and everything is concatenated
    once at the end of the run.  Sample rows sharing a timestamp are
    collapsed to the last one at finalization, keeping timestamps
    strictly increasing.
    """

    def __init__(self) -> None:
        self.s_list: list[tuple] = []
        self.s_blocks: list[np.ndarray] = []
        self.it_list: list[tuple] = []
        self.it_blocks: list[np.ndarray] = []
        self.intervals: list[tuple[float, float, float]] = []
        self.violations: list[tuple[float, str, str]] = []
        self.final_good_join: tuple[float, int] | None = None
        self._last_sample_t = -math.inf

    def add_sample(self, t, size, bad_frac, jg, alg_total, adv_total) -> None:
        self.s_list.append((t, size, bad_frac, jg, alg_total, adv_total))
        self._last_sample_t = t

    def sample_block(self, arr: np.ndarray) -> None:
        if arr.shape[0] == 0:
            return
        if self.s_list:
            self.s_blocks.append(np.asarray(self.s_list, dtype=float))
            self.s_list = []
        self.s_blocks.append(arr.copy())
        self._last_sample_t = float(arr[-1, 0])

    def last_sample_time(self) -> float:
        return self._last_sample_t

    def add_iteration(self, **kw) -> None:
        self.it_list.append(tuple(kw[k] for k in _ITER_FIELDS))

    def iteration_block(self, arr: np.ndarray) -> None:
        if arr.shape[0] == 0:
            return
        if self.it_list:
            self.it_blocks.append(np.asarray(self.it_list, dtype=float))
            self.it_list = []
        self.it_blocks.append(arr.copy())

    def violation(self, t: float, kind: str, detail: str) -> None:
        self.violations.append((t, kind, detail))

    def finalize_samples(self) -> np.ndarray:
        blocks = list(self.s_blocks)
        if self.s_list:
            blocks.append(np.asarray(self.s_list, dtype=float))
        if not blocks:
            return np.empty((0, 6), dtype=float)
        arr = np.concatenate(blocks) if len(blocks) > 1 else blocks[0]
        if arr.shape[0] > 1:
            keep = np.ones(arr.shape[0], dtype=bool)
            keep[:-1] = arr[:-1, 0] != arr[1:, 0]
            arr = arr[keep]
        return arr

    def finalize_iterations(self) -> np.ndarray:
        blocks = list(self.it_blocks)
        if self.it_list:
            blocks.append(np.asarray(self.it_list, dtype=float))
        if not blocks:
            return np.empty((0, len(_ITER_FIELDS)), dtype=float)
        return np.concatenate(blocks) if len(blocks) > 1 else blocks[0]


@dataclass
class SimResult:
    """Everything a run produced: ledgers, timeseries, analysis records."""

    config: SimConfig
    ledger: CostLedger
    adversary: AdversaryLedger
    samples: dict[str, np.ndarray]
    iterations: dict[str, np.ndarray]
    intervals: list[tuple[float, float, float]]
    violations: list[tuple[float, str, str]]
    valid: bool
    invalid_reason: str | None
    good_joins: int
    bad_joins: int
    bad_attempts: int
    rejected_good: int
    rejected_ids: list[str]
    departs: int
    final_good_join: tuple[float, int] | None
    duration: float

    def alg_spend_rate(self) -> float:
        return self.ledger.algorithmic_total / self.duration if self.duration > 0 else 0.0

    def adv_work_rate(self) -> float:
        return self.adversary.spent / self.duration if self.duration > 0 else 0.0

    def timeseries_csv(self) -> str:
        t = self.samples["time"]
        lines = ["time,n_system,bad_fraction,jg_estimate,alg_spend_rate,adv_spend_rate"]
        prev_t, prev_a, prev_v = 0.0, 0, 0
        for i in range(t.size):
            dt = t[i] - prev_t
            alg = (int(self.samples["alg_total"][i]) - prev_a) / dt if dt > 0 else 0.0
            adv = (int(self.samples["adv_total"][i]) - prev_v) / dt if dt > 0 else 0.0
            lines.append(
                f"{t[i]:.10g},{int(self.samples['size'][i])},"
                f"{self.samples['bad_fraction'][i]:.10g},"
                f"{self.samples['jg'][i]:.10g},{alg:.10g},{adv:.10g}"
            )
            prev_t = float(t[i])
            prev_a = int(self.samples["alg_total"][i])
            prev_v = int(self.samples["adv_total"][i])
        return "\n".join(lines) + "\n"

    def iteration_csv(self) -> str:
        it = self.iterations
        lines = ["iteration,start,length,alg_entrance,alg_purge,adv_entrance,adv_purge"]
        for i in range(it["iteration"].size):
            lines.append(
                f"{int(it['iteration'][i])},{it['start'][i]:.10g},{it['length'][i]:.10g},"
                f"{int(it['alg_entrance'][i])},{int(it['alg_purge'][i])},"
                f"{int(it['adv_entrance'][i])},{int(it['adv_purge'][i])}"
            )
        return "\n".join(lines) + "\n"


# =====================================================================
# Shared scheduling arithmetic
# =====================================================================


def _next_window_injection(spent, rate, t_from, t_limit, view, w):
    """Earliest (time, price) for one join under trailing-window pricing.

    The price is piecewise-constant between window-entry expiries and only
    steps down as time passes, so scanning expiry segments finds the exact
    earliest affordable instant.  Returns None when nothing fits strictly
    before ``t_limit``.
    """
    seg = t_from
    while seg < t_limit:
        price = 1 + view.count_after(seg - w)
        t_aff = max(seg, (spent + price) / rate)
        oldest = view.first_after(seg - w)
        seg_end = t_limit if oldest is None else min(oldest + w, t_limit)
        if t_aff < seg_end:
            return t_aff, price
        # an expiry rounding to exactly seg must still advance the scan
        seg = max(seg_end, math.nextafter(seg, math.inf))
    return None


def _next_ratio_injection(spent, rate, t_from, t_limit, n_a, iter_start, gm):
    """Earliest (time, price) under measured-rate/estimate pricing.

    The price falls as the iteration ages while the budget grows, so the
    affordability gap is monotone; bisection pins the crossing and the
    integer price at that instant is re-quoted exactly.
    """

    def gap(t: float) -> float:
        return rate * t - spent - gmcom_price_at(gm, n_a, t - iter_start)

    if gap(t_from) >= 0:
        return t_from, gmcom_price_at(gm, n_a, t_from - iter_start)
    if gap(t_limit) < 0:
        return None
    lo, hi = t_from, t_limit
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if gap(mid) >= 0:
            hi = mid
        else:
            lo = mid
    price = gmcom_price_at(gm, n_a, hi - iter_start)
    t_aff = max(t_from, (spent + price) / rate)
    if t_aff >= t_limit:
        return None
    return t_aff, gmcom_price_at(gm, n_a, t_aff - iter_start)


class _WindowBuf:
    """Sorted join timestamps in one flat array with amortized growth.

    ``floor_time`` records the newest timestamp ever pruned away; the
    estimator asserts no future pricing window can reach below it.
    """

    __slots__ = ("buf", "n", "floor_time")

    def __init__(self) -> None:
        self.buf = np.empty(4096, dtype=np.float64)
        self.n = 0
        self.floor_time = -math.inf

    def ensure(self, extra: int) -> None:
        need = self.n + extra
        if need > self.buf.shape[0]:
            cap = max(need, 2 * self.buf.shape[0])
            new = np.empty(cap, dtype=np.float64)
            new[: self.n] = self.buf[: self.n]
            self.buf = new

    def append(self, t: float) -> None:
        self.ensure(1)
        self.buf[self.n] = t
        self.n += 1

    def count_after(self, x: float) -> int:
        return self.n - int(np.searchsorted(self.buf[: self.n], x, side="right"))

    def first_after(self, x: float):
        i = int(np.searchsorted(self.buf[: self.n], x, side="right"))
        return float(self.buf[i]) if i < self.n else None

    def prune(self, horizon: float) -> None:
        i = int(np.searchsorted(self.buf[: self.n], horizon, side="left"))
        if i > 1024:
            self.buf[: self.n - i] = self.buf[i : self.n]
            self.n -= i
            self.floor_time = max(self.floor_time, horizon)


class _RefWindowView:
    """count/first queries over the reference backend's join-log list."""

    def __init__(self, log: list[float]):
        self.log = log

    def count_after(self, x: float) -> int:
        return len(self.log) - bisect_right(self.log, x)

    def first_after(self, x: float):
        i = bisect_right(self.log, x)
        return self.log[i] if i < len(self.log) else None


def _prune_horizon(t: float, jg_hat: float) -> float:
    return t - max(8.0, 4.0 / jg_hat)


# =====================================================================
# Fast backend
# =====================================================================


class _FastBackend:
    """Counter/cohort protocol state with batched adversary advancement.

    Membership turnover is tracked with generation stamps instead of sets:
    a member counts toward |S_cur - S_est| exactly when it joined after
    the last estimator snapshot (its join est-generation equals the
    current one), and toward the symmetric difference with the last purge
    snapshot exactly when it joined in the current iteration.  Both
    counters therefore update in O(1) per event, and purges and estimator
    snapshots are O(1) resets.
    """

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.cfg = sim.config
        self.policy = sim.policy
        self.heur = sim.policy.heuristics
        self.ledger = sim.ledger
        self.adv = sim.adv_ledger
        self.rec = sim.recorder

        self.n_good = 0
        self.n_bad = 0
        self.good_live: dict[str, tuple[int, int]] = {}  # ident -> (join_iter, join_estgen)
        self.rejected_good: set[str] = set()
        self.bad_cohorts: deque[list] = deque()  # [count, join_iter, join_estgen]

        self.iteration = 1
        self.n_a = 0
        self.n_d = 0
        self.s_prev_size = 0
        self.iter_start = 0.0
        self.iter_good_joins = 0
        self.iter_bad_joins = 0
        self.carried_bad = 0

        self.diff_est = 0
        self.symdiff = 0
        self.est_gen = 1  # generation stamps start below this: bootstrap is in the snapshot
        self.jg_hat = sim.jg0
        self.last_change = 0.0
        self.jg_iter_start = sim.jg0
        self.jg_iter_max = sim.jg0

        self.window = _WindowBuf()
        self.gm: GMComState | None = None
        if self.policy.pricing == RATIO:
            self.gm = GMComState(
                jg_estimate=sim.gmcom_jg0, failure_factor=self.cfg.gmcom_failure_factor
            )
        self._pending_attempts: int | None = None
        self._geom_arr = np.empty(0, dtype=np.int64)
        self._geom_i = 0
        self._marks = np.zeros(5, dtype=np.int64)
        self._it_scratch = np.empty((0, len(_ITER_FIELDS)), dtype=np.float64)
        self._smp_scratch = np.empty((0, 6), dtype=np.float64)

    # -- setup ---------------------------------------------------------

    def bootstrap(self, initial_idents: list[str]) -> None:
        for ident in initial_idents:
            self.good_live[ident] = (0, 0)
        self.n_good = len(initial_idents)
        self.s_prev_size = self.n_good
        k = committee_size(self.n_good, self.sim.n0, self.cfg.c_comm)
        self.sim.rng_committee.choice(self.n_good, size=k, replace=False)

    # -- state views ----------------------------------------------------

    @property
    def size(self) -> int:
        return self.n_good + self.n_bad

    def jg_display(self) -> float:
        if self.policy.pricing == RATIO:
            return self.gm.jg_estimate
        return self.jg_hat if self.policy.estimator else 0.0

    # -- good-side events ------------------------------------------------

    def _price_good(self, t: float) -> int:
        if self.policy.pricing == WINDOW:
            return 1 + self.window.count_after(t - 1.0 / self.jg_hat)
        if self.policy.pricing == RATIO:
            return gmcom_price_at(self.gm, self.n_a, t - self.iter_start)
        return 1

    def apply_good_join(self, t: float, ident: str) -> int | None:
        self.rejected_good.discard(ident)
        if ident in self.good_live:
            raise ValidationError(f"duplicate live join of {ident!r}")
        if self.heur.h3_accuracy > 0 and not h3_admit(
            True, self.heur.h3_accuracy, self.sim.rng_h3_good
        ):
            self.rejected_good.add(ident)
            self.sim.n_rejected_good += 1
            self.sim.rejected_ids.append(ident)
            return None
        price = self._price_good(t)
        self.ledger.alg_entrance += price
        self.good_live[ident] = (self.iteration, self.est_gen)
        self.n_good += 1
        self.n_a += 1
        self.iter_good_joins += 1
        self.sim.n_good_joins += 1
        if self.policy.estimator:
            self.diff_est += 1
        if self.heur.h1:
            self.symdiff += 1
        if self.policy.pricing == WINDOW:
            self.window.append(t)
        if self.policy.pricing == RATIO:
            gmcom_after_join(self.gm, self.n_a, t - self.iter_start)
        self.rec.final_good_join = (t, price)
        self._post_event(t)
        return price

    def apply_depart(self, t: float, ident: str) -> bool:
        if ident in self.rejected_good:
            self.rejected_good.discard(ident)
            return False
        rec = self.good_live.pop(ident, None)
        if rec is None:
            raise ValidationError(f"departure of non-live id {ident!r}")
        self.n_good -= 1
        self.n_d += 1
        self.sim.n_departs += 1
        if self.policy.estimator and rec[1] == self.est_gen:
            self.diff_est -= 1
        if self.heur.h1:
            self.symdiff += 1 if rec[0] < self.iteration else -1
        self._post_event(t)
        return True

    def apply_tick(self, t: float) -> None:
        keep = purge_retention(self.sim.adv_cfg, self.adv, self.n_bad, t)
        self._evict_bad(keep)
        self.ledger.alg_purge += self.n_good * self.cfg.test_cost
        self.ledger.adv_purge += keep * self.cfg.test_cost
        if self.cfg.test_cost != 1 and keep:
            self.adv.spent += keep * (self.cfg.test_cost - 1)

    # -- protocol checks --------------------------------------------------

    def _post_event(self, t: float) -> None:
        if self.policy.estimator:
            self._estimator_check(t)
        if self.policy.purges and self._purge_due(t):
            self._purge(t)

    def _estimator_check(self, t: float) -> None:
        n = self.size
        if n > 0 and 5 * self.diff_est >= 3 * n and t > self.last_change:
            l_est = t - self.last_change
            jg_new = n / l_est
            if t - (1.0 / jg_new) < self.window.floor_time:
                raise EngineError(
                    "pricing window history pruned too aggressively; population "
                    "collapsed more than 4x within one estimator interval"
                )
            self.rec.intervals.append((self.last_change, t, jg_new))
            self.jg_hat = jg_new
            self.jg_iter_max = max(self.jg_iter_max, jg_new)
            self.last_change = t
            self.est_gen += 1
            self.diff_est = 0
            self.window.prune(_prune_horizon(t, self.jg_hat))

    def _purge_due(self, t: float) -> bool:
        h = self.heur
        if h.h2:
            bound = h2_bad_upper_bound(
                self.n_a,
                t - self.iter_start,
                self.jg_hat,
                self.size,
                self.carried_bad,
                h.rate_bracket_high,
            )
            return h2_purge_due(bound, h.h2_margin)
        if h.h1:
            return h1_purge_due_counts(self.symdiff, self.s_prev_size)
        return 11 * (self.n_a + self.n_d) >= self.s_prev_size

    def _evict_bad(self, keep: int) -> None:
        """Drop all but the oldest ``keep`` bad units; fix turnover counters."""
        lost_est = 0
        kept: deque[list] = deque()
        remaining = keep
        for c in self.bad_cohorts:
            take = min(c[0], remaining)
            remaining -= take
            if take:
                kept.append([take, c[1], c[2]])
            gone = c[0] - take
            if gone and self.policy.estimator and c[2] == self.est_gen:
                lost_est += gone
        self.bad_cohorts = kept
        if self.policy.estimator:
            self.diff_est -= lost_est
        self.n_bad = keep

    def _purge(self, t: float) -> None:
        keep = purge_retention(self.sim.adv_cfg, self.adv, self.n_bad, t)
        self._evict_bad(keep)
        self.ledger.alg_purge += self.n_good
        self.ledger.adv_purge += keep
        if self.policy.pricing == RATIO:
            gmcom_close_iteration(self.gm, self.n_a, t - self.iter_start)
        self._close_iteration_row(t, 1)
        self.iteration += 1
        self.n_a = 0
        self.n_d = 0
        self.iter_good_joins = 0
        self.iter_bad_joins = 0
        self.carried_bad = 0
        self.symdiff = 0
        self.s_prev_size = self.size
        self.iter_start = t
        self.jg_iter_start = self.jg_hat if self.policy.estimator else self.sim.jg0
        self.jg_iter_max = self.jg_iter_start
        k = committee_size(self.size, self.sim.n0, self.cfg.c_comm)
        bad_in = 0
        if self.n_bad > 0:
            bad_in = int(
                self.sim.rng_committee.hypergeometric(self.n_bad, self.n_good, k)
            )
        if 2 * bad_in >= k and k > 0:
            self.rec.violation(t, "committee", f"bad {bad_in}/{k}")
        if self.policy.estimator:
            self._estimator_check(t)
        self.sim.sample(t)

    def _close_iteration_row(self, t: float, count: int) -> None:
        a_e, a_p, v_e, v_p = (
            self.ledger.alg_entrance,
            self.ledger.alg_purge,
            self.ledger.adv_entrance,
            self.ledger.adv_purge,
        )
        m = self._marks
        self.rec.add_iteration(
            iteration=self.iteration,
            start=self.iter_start,
            length=t - self.iter_start,
            s_prev=self.s_prev_size,
            size_end=self.size,
            n_a=self.n_a,
            n_d=self.n_d,
            good_joins=self.iter_good_joins,
            bad_joins=self.iter_bad_joins,
            alg_entrance=a_e - int(m[0]),
            alg_purge=a_p - int(m[1]),
            adv_entrance=v_e - int(m[2]),
            adv_purge=v_p - int(m[3]),
            adv_work=self.adv.spent - int(m[4]),
            jg_start=self.jg_iter_start,
            jg_max=self.jg_iter_max,
            count=count,
        )
        m[0] = a_e
        m[1] = a_p
        m[2] = v_e
        m[3] = v_p
        m[4] = self.adv.spent

    def final_close(self, t_end: float) -> None:
        self._close_iteration_row(t_end, 1)

    # -- adversary advancement -------------------------------------------

    def advance_adversary(self, t0: float, t1: float) -> None:
        if self.sim.adv_cfg.rate <= 0 or t1 <= t0:
            return
        if self.sim.adv_cfg.strategy == BURST:
            period = self.sim.adv_cfg.burst_period
            while self.sim.next_burst < t1:
                self._burst_at(self.sim.next_burst)
                self.sim.next_burst += period
            return
        t = t0
        while t < t1:
            if self.policy.pricing == UNIT or (
                self.policy.pricing == RATIO and self.gm.failure_mode
            ):
                self._advance_unit(t, t1)
                return
            if self.policy.pricing == RATIO:
                t = self._ratio_step(t, t1)
                if t is None:
                    return
            else:
                self._advance_window(t, t1)
                return

    # window pricing -----------------------------------------------------

    def _refill_geoms(self, k: int) -> None:
        q = 1.0 - self.heur.h3_accuracy
        fresh = self.sim.rng_h3_bad.geometric(q, size=k).astype(np.int64)
        if self._geom_i >= self._geom_arr.shape[0]:
            self._geom_arr = fresh
        else:
            self._geom_arr = np.concatenate([self._geom_arr[self._geom_i :], fresh])
        self._geom_i = 0

    def _next_geom(self) -> int:
        if self._geom_i >= self._geom_arr.shape[0]:
            self._refill_geoms(256)
        v = int(self._geom_arr[self._geom_i])
        self._geom_i += 1
        return v

    def _advance_window(self, t: float, t1: float) -> None:
        """Drive the flood kernel over [t, t1), handling its exits.

        The kernel applies exact per-event joins and, for a non-retaining
        adversary, the purges those joins trigger (including their cost
        rows and sample rows, written into scratch blocks).  Control
        returns here on estimator triggers, retention-requiring purges,
        exhausted scratch space, and the end of the span.
        """
        heur = self.heur
        h3 = heur.h3_accuracy > 0
        if heur.h2:
            rule = kern.RULE_BOUND
        elif heur.h1:
            rule = kern.RULE_SYMDIFF
        else:
            rule = kern.RULE_EVENTS
        purge_inline = self.policy.purges and not self.sim.adv_cfg.pays_purge
        if self._it_scratch.shape[0] == 0:
            self._it_scratch = np.empty((16384, len(_ITER_FIELDS)), dtype=np.float64)
            self._smp_scratch = np.empty((16384, 6), dtype=np.float64)
        ints = np.zeros(kern.N_INTS, dtype=np.int64)
        flts = np.zeros(kern.N_FLTS, dtype=np.float64)
        empty = np.empty(0, dtype=np.int64)
        while t < t1:
            win = self.window
            win.prune(_prune_horizon(t, self.jg_hat))
            win.ensure(8192)
            if h3 and self._geom_arr.shape[0] - self._geom_i < 64:
                self._refill_geoms(4096)
            bad_gen = sum(c[0] for c in self.bad_cohorts if c[2] == self.est_gen)
            ints[kern.I_SPENT] = self.adv.spent
            ints[kern.I_ATTEMPTS] = self.adv.attempts
            ints[kern.I_ADMITTED] = self.adv.admitted
            ints[kern.I_NA] = self.n_a
            ints[kern.I_ND] = self.n_d
            ints[kern.I_DIFF] = self.diff_est
            ints[kern.I_SYM] = self.symdiff
            ints[kern.I_NWIN] = win.n
            ints[kern.I_GEOM] = self._geom_i
            ints[kern.I_PENDING] = self._pending_attempts or 0
            ints[kern.I_CARRIED] = self.carried_bad
            ints[kern.I_SPREV] = self.s_prev_size
            ints[kern.I_ALG_ENT] = self.ledger.alg_entrance
            ints[kern.I_ALG_PUR] = self.ledger.alg_purge
            ints[kern.I_ADV_ENT] = self.ledger.adv_entrance
            ints[kern.I_ADV_PUR] = self.ledger.adv_purge
            ints[kern.I_NGOOD] = self.n_good
            ints[kern.I_NBAD] = self.n_bad
            ints[kern.I_BADGEN] = bad_gen
            ints[kern.I_ITER] = self.iteration
            ints[kern.I_GOODJ] = self.iter_good_joins
            ints[kern.I_BADJ] = self.iter_bad_joins
            ints[kern.I_ROWN] = 0
            ints[kern.I_SMPN] = 0
            ints[kern.I_JOINS] = 0
            ints[kern.I_PURGES] = 0
            flts[kern.F_T] = t
            flts[kern.F_T1] = t1
            flts[kern.F_W] = 1.0 / self.jg_hat
            flts[kern.F_RATE] = self.sim.adv_cfg.rate
            flts[kern.F_JG] = self.jg_hat
            flts[kern.F_RBH] = heur.rate_bracket_high
            flts[kern.F_MARGIN] = heur.h2_margin
            flts[kern.F_ITER_START] = self.iter_start
            flts[kern.F_LIMIT] = POPULATION_LIMIT
            flts[kern.F_JG_ITER_START] = self.jg_iter_start
            flts[kern.F_JG_ITER_MAX] = self.jg_iter_max
            reason = kern.flood_window(
                win.buf,
                ints,
                flts,
                self._marks,
                self._it_scratch,
                self._smp_scratch,
                self._geom_arr if h3 else empty,
                rule,
                self.policy.estimator,
                heur.h1,
                h3,
                purge_inline,
            )
            joins = int(ints[kern.I_JOINS])
            purges = int(ints[kern.I_PURGES])
            self.adv.spent = int(ints[kern.I_SPENT])
            self.adv.attempts = int(ints[kern.I_ATTEMPTS])
            self.adv.admitted = int(ints[kern.I_ADMITTED])
            self._geom_i = int(ints[kern.I_GEOM])
            pend = int(ints[kern.I_PENDING])
            self._pending_attempts = pend if pend > 0 else None
            self.sim.n_bad_joins += joins
            win.n = int(ints[kern.I_NWIN])
            self.ledger.alg_purge = int(ints[kern.I_ALG_PUR])
            self.ledger.adv_entrance = int(ints[kern.I_ADV_ENT])
            self.n_a = int(ints[kern.I_NA])
            self.n_d = int(ints[kern.I_ND])
            if self.policy.estimator:
                self.diff_est = int(ints[kern.I_DIFF])
            if heur.h1:
                self.symdiff = int(ints[kern.I_SYM])
            self.carried_bad = int(ints[kern.I_CARRIED])
            self.s_prev_size = int(ints[kern.I_SPREV])
            self.iteration = int(ints[kern.I_ITER])
            self.iter_good_joins = int(ints[kern.I_GOODJ])
            self.iter_bad_joins = int(ints[kern.I_BADJ])
            new_bad = int(ints[kern.I_NBAD])
            if purges > 0:
                self.bad_cohorts = deque()
                if new_bad:
                    self.bad_cohorts.append([new_bad, self.iteration, self.est_gen])
            elif joins:
                self.bad_cohorts.append([joins, self.iteration, self.est_gen])
            self.n_bad = new_bad
            self.iter_start = float(flts[kern.F_ITER_START])
            self.jg_iter_start = float(flts[kern.F_JG_ITER_START])
            self.jg_iter_max = float(flts[kern.F_JG_ITER_MAX])
            rown = int(ints[kern.I_ROWN])
            smpn = int(ints[kern.I_SMPN])
            if rown:
                self.rec.iteration_block(self._it_scratch[:rown])
            if smpn:
                self.rec.sample_block(self._smp_scratch[:smpn])
            t = float(flts[kern.F_T])
            if reason in (kern.PURGE, kern.ESTIMATE):
                self._post_event(t)
            elif reason == kern.WINDOW_FULL:
                win.ensure(max(16384, win.n))
            elif reason == kern.GEOMS_EMPTY:
                self._refill_geoms(8192)
            elif reason == kern.ROWS_FULL:
                pass  # blocks flushed above; re-enter
            else:
                return

    def _single_attempt(self, t_att: float, price: int) -> float:
        """One paid classifier attempt; admits when the quest completes."""
        if self._pending_attempts is None:
            self._pending_attempts = self._next_geom()
        self.adv.spent += price
        self.adv.attempts += 1
        self._pending_attempts -= 1
        if self._pending_attempts == 0:
            self._pending_attempts = None
            self._apply_bad_single(t_att, price, already_paid=True)
        return t_att

    def _apply_bad_single(self, t: float, price: int, already_paid: bool = False) -> None:
        if not already_paid:
            self.adv.spent += price
            self.adv.attempts += 1
        self.adv.admitted += 1
        self.ledger.adv_entrance += price
        self.bad_cohorts.append([1, self.iteration, self.est_gen])
        self.n_bad += 1
        self.n_a += 1
        self.iter_bad_joins += 1
        self.sim.n_bad_joins += 1
        if self.policy.estimator:
            self.diff_est += 1
        if self.heur.h1:
            self.symdiff += 1
        self.window.append(t)
        self._post_event(t)

    # ratio pricing (before the failure latch) -----------------------------

    def _ratio_step(self, t: float, t1: float):
        nxt = _next_ratio_injection(
            self.adv.spent,
            self.sim.adv_cfg.rate,
            t,
            t1,
            self.n_a,
            self.iter_start,
            self.gm,
        )
        if nxt is None:
            return None
        t_inj, price = nxt
        self.adv.spent += price
        self.adv.attempts += 1
        self.adv.admitted += 1
        self.ledger.adv_entrance += price
        self.bad_cohorts.append([1, self.iteration, self.est_gen])
        self.n_bad += 1
        self.n_a += 1
        self.iter_bad_joins += 1
        self.sim.n_bad_joins += 1
        gmcom_after_join(self.gm, self.n_a, t_inj - self.iter_start)
        self._post_event(t_inj)
        return t_inj

    # unit pricing ---------------------------------------------------------

    def _advance_unit(self, t0: float, t1: float) -> None:
        """Constant-price floods in closed form (never heuristic-gated).

        Joins cost 1, so join times follow the integer spend directly.
        Steady purge cycles repeat identically between anchors (the purge
        evicts every non-paying bad ID and restores the starting size),
        allowing multi-cycle aggregation; committee rotations and
        per-purge sample rows are elided inside an aggregated block.
        """
        rate = self.sim.adv_cfg.rate
        t = t0
        while t < t1:
            m = int(math.floor(rate * t1 - self.adv.spent))
            while m > 0 and max(t, (self.adv.spent + m) / rate) >= t1:
                m -= 1
            if m <= 0:
                return
            k_e = None
            if self.policy.estimator:
                k_e = max(1, (3 * self.size - 5 * self.diff_est + 1) // 2)
            k_p = None
            if self.policy.purges:
                num = self.s_prev_size - 11 * (self.n_a + self.n_d)
                k_p = max(1, -(-num // 11))
            j = m
            if k_e is not None:
                j = min(j, k_e)
            if k_p is not None:
                j = min(j, k_p)
            if (
                k_p is not None
                and j == k_p
                and self.n_a == 0
                and self.n_d == 0
                and self.n_bad == 0
                and self.s_prev_size == self.size
                and not self.sim.adv_cfg.pays_purge
                and (k_e is None or k_e > k_p + 1)
            ):
                n_cycles = int((rate * t1 - self.adv.spent) / k_p)
                while n_cycles > 0 and max(
                    t, (self.adv.spent + n_cycles * k_p) / rate
                ) >= t1:
                    n_cycles -= 1
                if n_cycles >= 2:
                    t = self._aggregate_unit_cycles(t, n_cycles, k_p)
                    continue
            t = self._apply_bad_bulk(t, j)
            self._post_event(t)

    def _apply_bad_bulk(self, t: float, j: int) -> float:
        rate = self.sim.adv_cfg.rate
        t_j = max(t, (self.adv.spent + j) / rate)
        self.adv.spent += j
        self.adv.attempts += j
        self.adv.admitted += j
        self.ledger.adv_entrance += j
        self.bad_cohorts.append([j, self.iteration, self.est_gen])
        self.n_bad += j
        self.n_a += j
        self.iter_bad_joins += j
        self.sim.n_bad_joins += j
        if self.policy.estimator:
            self.diff_est += j
        if self.heur.h1:
            self.symdiff += j
        return t_j

    def _aggregate_unit_cycles(self, t: float, n_cycles: int, k_p: int) -> float:
        rate = self.sim.adv_cfg.rate
        start = self.iter_start
        t_last = max(t, (self.adv.spent + n_cycles * k_p) / rate)
        total = n_cycles * k_p
        self.adv.spent += total
        self.adv.attempts += total
        self.adv.admitted += total
        self.ledger.adv_entrance += total
        self.ledger.alg_purge += n_cycles * self.n_good
        self.sim.n_bad_joins += total
        # every bad ID joined and was evicted inside the block: membership
        # and turnover counters end exactly where they started.
        a_e, a_p, v_e, v_p = (
            self.ledger.alg_entrance,
            self.ledger.alg_purge,
            self.ledger.adv_entrance,
            self.ledger.adv_purge,
        )
        m = self._marks
        self.rec.add_iteration(
            iteration=self.iteration,
            start=start,
            length=t_last - start,
            s_prev=self.s_prev_size,
            size_end=self.size,
            n_a=total,
            n_d=0,
            good_joins=0,
            bad_joins=total,
            alg_entrance=a_e - int(m[0]),
            alg_purge=a_p - int(m[1]),
            adv_entrance=v_e - int(m[2]),
            adv_purge=v_p - int(m[3]),
            adv_work=self.adv.spent - int(m[4]),
            jg_start=self.jg_iter_start,
            jg_max=self.jg_iter_max,
            count=n_cycles,
        )
        m[0] = a_e
        m[1] = a_p
        m[2] = v_e
        m[3] = v_p
        m[4] = self.adv.spent
        if 6 * k_p >= self.size + k_p:
            self.rec.violation(t_last, "population", f"bad peak {k_p}/{self.size + k_p}")
        self.iteration += n_cycles
        self.iter_start = t_last
        self.jg_iter_start = self.jg_hat if self.policy.estimator else self.sim.jg0
        self.jg_iter_max = self.jg_iter_start
        self.s_prev_size = self.size
        return t_last

    # burst strategy --------------------------------------------------------

    def _burst_at(self, b: float) -> None:
        """Spend the whole bank in back-to-back joins at one instant."""
        rate = self.sim.adv_cfg.rate
        while True:
            if self.policy.pricing == WINDOW:
                price = 1 + self.window.count_after(b - 1.0 / self.jg_hat)
            elif self.policy.pricing == RATIO and not self.gm.failure_mode:
                price = gmcom_price_at(self.gm, self.n_a, b - self.iter_start)
            else:
                price = 1
            if self.adv.spent + price > rate * b:
                return
            if self.heur.h3_accuracy > 0:
                self._single_attempt(b, price)
            else:
                self._apply_bad_single(b, price)
            if self.policy.pricing == RATIO:
                gmcom_after_join(self.gm, self.n_a, b - self.iter_start)

    # step support ------------------------------------------------------------

    def pop_next_injection(self, t_from: float, bound: float):
        """Apply at most one admitted injection strictly before ``bound``."""
        if self.sim.adv_cfg.rate <= 0 or bound <= t_from:
            return None
        if self.sim.adv_cfg.strategy == BURST:
            while self.sim.next_burst < bound:
                b = self.sim.next_burst
                before = self.adv.admitted
                self._burst_at(b)
                self.sim.next_burst = b + self.sim.adv_cfg.burst_period
                if self.adv.admitted > before:
                    return b
            return None
        if self.policy.pricing == UNIT or (
            self.policy.pricing == RATIO and self.gm.failure_mode
        ):
            t_inj = max(t_from, (self.adv.spent + 1) / self.sim.adv_cfg.rate)
            if t_inj >= bound:
                return None
            self._apply_bad_bulk(t_from, 1)
            self._post_event(t_inj)
            return t_inj
        if self.policy.pricing == RATIO:
            return self._ratio_step(t_from, bound)
        while True:
            w = 1.0 / self.jg_hat
            nxt = _next_window_injection(
                self.adv.spent, self.sim.adv_cfg.rate, t_from, bound, self.window, w
            )
            if nxt is None:
                return None
            t_att, price = nxt
            if self.heur.h3_accuracy > 0:
                before = self.adv.admitted
                self._single_attempt(t_att, price)
                if self.adv.admitted > before:
                    return t_att
                t_from = t_att
                continue
            self._apply_bad_single(t_att, price)
            return t_att


# =====================================================================
# Reference backend
# =====================================================================


class _ReferenceBackend:
    """Literal set-based protocol state; per-event processing only."""

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.cfg = sim.config
        self.policy = sim.policy
        self.heur = sim.policy.heuristics
        self.ledger = sim.ledger
        self.adv = sim.adv_ledger
        self.rec = sim.recorder
        self.state = SystemState()
        self.est = EstimatorState(jg_hat=sim.jg0)
        self.rejected_good: set[str] = set()
        self.iter_good_joins = 0
        self.iter_bad_joins = 0
        self.carried_bad = 0
        self.jg_iter_start = sim.jg0
        self.jg_iter_max = sim.jg0
        self.gm: GMComState | None = None
        if self.policy.pricing == RATIO:
            self.gm = GMComState(
                jg_estimate=sim.gmcom_jg0, failure_factor=self.cfg.gmcom_failure_factor
            )
        self._pending_attempts: int | None = None
        self._bad_seq = 0
        self._mark_adv_work = 0

    def bootstrap(self, initial_idents: list[str]) -> None:
        st = self.state
        for ident in initial_idents:
            token = st.mint(ident)
            st.members.add(token)
            st.info[token] = togcom.MemberInfo(True, 0.0, 0)
        st.s_prev = frozenset(st.members)
        self.est.s_est = frozenset(st.members)
        k = committee_size(len(st.members), self.sim.n0, self.cfg.c_comm)
        self.sim.rng_committee.choice(len(st.members), size=k, replace=False)
        st.committee = Committee(k, 0)

    @property
    def size(self) -> int:
        return self.state.size

    @property
    def n_bad(self) -> int:
        return self.state.bad_count

    @property
    def n_good(self) -> int:
        return self.state.size - self.state.bad_count

    def jg_display(self) -> float:
        if self.policy.pricing == RATIO:
            return self.gm.jg_estimate
        return self.est.jg_hat if self.policy.estimator else 0.0

    # -- events -----------------------------------------------------------

    def apply_good_join(self, t: float, ident: str) -> int | None:
        self.rejected_good.discard(ident)
        if self.state.live_token(ident) is not None:
            raise ValidationError(f"duplicate live join of {ident!r}")
        if self.heur.h3_accuracy > 0 and not h3_admit(
            True, self.heur.h3_accuracy, self.sim.rng_h3_good
        ):
            self.rejected_good.add(ident)
            self.sim.n_rejected_good += 1
            self.sim.rejected_ids.append(ident)
            return None
        if self.policy.pricing == WINDOW:
            price = togcom.on_join(self.state, self.est, ident, True, t, self.ledger)
        else:
            if self.policy.pricing == RATIO:
                price = gmcom_price_at(self.gm, self.state.n_a, t - self.state.iter_start)
            else:
                price = 1
            token = self.state.mint(ident)
            self.state.members.add(token)
            self.state.info[token] = togcom.MemberInfo(True, t, self.state.iteration)
            self.state.n_a += 1
            self.state.join_log.append(t)
            self.ledger.alg_entrance += price
        self.iter_good_joins += 1
        self.sim.n_good_joins += 1
        if self.policy.pricing == RATIO:
            gmcom_after_join(self.gm, self.state.n_a, t - self.state.iter_start)
        self.rec.final_good_join = (t, price)
        self._post_event(t)
        return price

    def apply_depart(self, t: float, ident: str) -> bool:
        if ident in self.rejected_good:
            self.rejected_good.discard(ident)
            return False
        togcom.on_depart(self.state, ident, t)
        self.sim.n_departs += 1
        self._post_event(t)
        return True

    def apply_tick(self, t: float) -> None:
        st = self.state
        bad = sorted(
            (tok for tok in st.members if not st.info[tok].is_good),
            key=lambda tok: (st.info[tok].join_time, tok),
        )
        keep = purge_retention(self.sim.adv_cfg, self.adv, len(bad), t)
        for tok in bad[keep:]:
            st.members.discard(tok)
            del st.info[tok]
        self.ledger.alg_purge += self.n_good * self.cfg.test_cost
        self.ledger.adv_purge += keep * self.cfg.test_cost
        if self.cfg.test_cost != 1 and keep:
            self.adv.spent += keep * (self.cfg.test_cost - 1)

    def _post_event(self, t: float) -> None:
        if self.policy.estimator:
            self._estimator_check(t)
        if self.policy.purges and self._purge_due(t):
            self._purge(t)

    def _estimator_check(self, t: float) -> None:
        prev_change = self.est.last_change
        if togcom.estimator_update(self.state, self.est, t):
            self.rec.intervals.append((prev_change, t, self.est.jg_hat))
            self.jg_iter_max = max(self.jg_iter_max, self.est.jg_hat)
            togcom.prune_join_log(self.state, self.est, t)

    def _purge_due(self, t: float) -> bool:
        st = self.state
        if self.heur.h2:
            bound = h2_bad_upper_bound(
                st.n_a,
                t - st.iter_start,
                self.est.jg_hat,
                st.size,
                self.carried_bad,
                self.heur.rate_bracket_high,
            )
            return h2_purge_due(bound, self.heur.h2_margin)
        if self.heur.h1:
            return h1_purge_due(st.members, st.s_prev)
        return togcom.purge_due(st)

    def _purge(self, t: float) -> None:
        st = self.state
        bad = sorted(
            (tok for tok in st.members if not st.info[tok].is_good),
            key=lambda tok: (st.info[tok].join_time, tok),
        )
        keep = purge_retention(self.sim.adv_cfg, self.adv, len(bad), t)
        retained = set(bad[:keep])
        if self.policy.pricing == RATIO:
            gmcom_close_iteration(self.gm, st.n_a, t - st.iter_start)
        closed_iter = st.iteration
        n_a, n_d = st.n_a, st.n_d
        iter_start = st.iter_start
        s_prev_size = len(st.s_prev)
        togcom.execute_purge(
            st,
            self.est,
            retained,
            t,
            self.ledger,
            self.sim.rng_committee,
            self.sim.n0,
            self.cfg.c_comm,
        )
        row = self.ledger.rows[-1]
        self.rec.add_iteration(
            iteration=closed_iter,
            start=iter_start,
            length=row.length,
            s_prev=s_prev_size,
            size_end=st.size,
            n_a=n_a,
            n_d=n_d,
            good_joins=self.iter_good_joins,
            bad_joins=self.iter_bad_joins,
            alg_entrance=row.alg_entrance,
            alg_purge=row.alg_purge,
            adv_entrance=row.adv_entrance,
            adv_purge=row.adv_purge,
            adv_work=self.adv.spent - self._mark_adv_work,
            jg_start=self.jg_iter_start,
            jg_max=self.jg_iter_max,
            count=1,
        )
        self._mark_adv_work = self.adv.spent
        self.iter_good_joins = 0
        self.iter_bad_joins = 0
        self.carried_bad = 0
        self.jg_iter_start = self.est.jg_hat if self.policy.estimator else self.sim.jg0
        self.jg_iter_max = self.jg_iter_start
        c = st.committee
        if 2 * c.bad >= c.size and c.size > 0:
            self.rec.violation(t, "committee", f"bad {c.bad}/{c.size}")
        if self.policy.estimator:
            self._estimator_check(t)
        self.sim.sample(t)

    def final_close(self, t_end: float) -> None:
        st = self.state
        m = st.iter_cost_mark
        self.rec.add_iteration(
            iteration=st.iteration,
            start=st.iter_start,
            length=t_end - st.iter_start,
            s_prev=len(st.s_prev),
            size_end=st.size,
            n_a=st.n_a,
            n_d=st.n_d,
            good_joins=self.iter_good_joins,
            bad_joins=self.iter_bad_joins,
            alg_entrance=self.ledger.alg_entrance - m[0],
            alg_purge=self.ledger.alg_purge - m[1],
            adv_entrance=self.ledger.adv_entrance - m[2],
            adv_purge=self.ledger.adv_purge - m[3],
            adv_work=self.adv.spent - self._mark_adv_work,
            jg_start=self.jg_iter_start,
            jg_max=self.jg_iter_max,
            count=1,
        )
        self.ledger.rows.append(
            IterationRow(
                st.iteration,
                st.iter_start,
                t_end - st.iter_start,
                self.ledger.alg_entrance - m[0],
                self.ledger.alg_purge - m[1],
                self.ledger.adv_entrance - m[2],
                self.ledger.adv_purge - m[3],
            )
        )

    # -- adversary ----------------------------------------------------------

    def advance_adversary(self, t0: float, t1: float) -> None:
        if self.sim.adv_cfg.rate <= 0 or t1 <= t0:
            return
        if self.sim.adv_cfg.strategy == BURST:
            period = self.sim.adv_cfg.burst_period
            while self.sim.next_burst < t1:
                self._burst_at(self.sim.next_burst)
                self.sim.next_burst += period
            return
        t = t0
        while t < t1:
            t = self.pop_next_injection(t, t1)
            if t is None:
                return

    def pop_next_injection(self, t_from: float, bound: float):
        rate = self.sim.adv_cfg.rate
        if rate <= 0 or bound <= t_from:
            return None
        if self.sim.adv_cfg.strategy == BURST:
            while self.sim.next_burst < bound:
                b = self.sim.next_burst
                before = self.adv.admitted
                self._burst_at(b)
                self.sim.next_burst = b + self.sim.adv_cfg.burst_period
                if self.adv.admitted > before:
                    return b
            return None
        while True:
            if self.policy.pricing == UNIT or (
                self.policy.pricing == RATIO and self.gm.failure_mode
            ):
                t_inj = max(t_from, (self.adv.spent + 1) / rate)
                nxt = (t_inj, 1) if t_inj < bound else None
            elif self.policy.pricing == RATIO:
                nxt = _next_ratio_injection(
                    self.adv.spent,
                    rate,
                    t_from,
                    bound,
                    self.state.n_a,
                    self.state.iter_start,
                    self.gm,
                )
            else:
                nxt = _next_window_injection(
                    self.adv.spent,
                    rate,
                    t_from,
                    bound,
                    _RefWindowView(self.state.join_log),
                    1.0 / self.est.jg_hat,
                )
            if nxt is None:
                return None
            t_att, price = nxt
            if self.heur.h3_accuracy > 0:
                if self._pending_attempts is None:
                    q = 1.0 - self.heur.h3_accuracy
                    self._pending_attempts = int(self.sim.rng_h3_bad.geometric(q))
                self.adv.spent += price
                self.adv.attempts += 1
                self._pending_attempts -= 1
                if self._pending_attempts > 0:
                    t_from = t_att
                    continue
                self._pending_attempts = None
                self._admit_bad(t_att, price, already_paid=True)
                return t_att
            self._admit_bad(t_att, price)
            return t_att

    def _admit_bad(self, t: float, price: int, already_paid: bool = False) -> None:
        if not already_paid:
            self.adv.spent += price
            self.adv.attempts += 1
        self.adv.admitted += 1
        ident = f"bad{self._bad_seq}"
        self._bad_seq += 1
        token = self.state.mint(ident)
        self.state.members.add(token)
        self.state.info[token] = togcom.MemberInfo(False, t, self.state.iteration)
        self.state.n_a += 1
        self.state.join_log.append(t)
        self.ledger.adv_entrance += price
        self.iter_bad_joins += 1
        self.sim.n_bad_joins += 1
        if self.policy.pricing == RATIO:
            gmcom_after_join(self.gm, self.state.n_a, t - self.state.iter_start)
        self._post_event(t)

    def _burst_at(self, b: float) -> None:
        rate = self.sim.adv_cfg.rate
        while True:
            if self.policy.pricing == WINDOW:
                price = togcom.entrance_difficulty(self.state, self.est, b)
            elif self.policy.pricing == RATIO and not self.gm.failure_mode:
                price = gmcom_price_at(self.gm, self.state.n_a, b - self.state.iter_start)
            else:
                price = 1
            if self.adv.spent + price > rate * b:
                return
            if self.heur.h3_accuracy > 0:
                if self._pending_attempts is None:
                    q = 1.0 - self.heur.h3_accuracy
                    self._pending_attempts = int(self.sim.rng_h3_bad.geometric(q))
                self.adv.spent += price
                self.adv.attempts += 1
                self._pending_attempts -= 1
                if self._pending_attempts == 0:
                    self._pending_attempts = None
                    self._admit_bad(b, price, already_paid=True)
            else:
                self._admit_bad(b, price)


# =====================================================================
# Simulation driver
# =====================================================================


class Simulation:
    """One deterministic run over a churn trace."""

    def __init__(
        self,
        config: SimConfig,
        trace: ChurnTrace,
        adversary: AdversaryConfig | None = None,
    ):
        if adversary is not None:
            config = replace(config, adversary=adversary)
        config.check()
        validate(trace)
        self.config = config
        self.policy = resolve_policy(config)
        self.trace = trace
        self.n0 = trace.n_init
        if self.n0 < 1:
            raise ConfigError("trace must start with at least one member at time 0")

        self.jg0 = config.jg0 if config.jg0 is not None else self.n0 / config.warmup_seconds
        if self.jg0 <= 0:
            raise ConfigError("initial rate estimate must be positive")
        self.gmcom_jg0 = config.gmcom_jg0 if config.gmcom_jg0 is not None else self.jg0

        self.rng_committee = np.random.default_rng([config.seed, 0xC0])
        self.rng_h3_good = np.random.default_rng([config.seed, 0x60])
        self.rng_h3_bad = np.random.default_rng([config.seed, 0xBD])

        self.ledger = CostLedger()
        self.adv_ledger = AdversaryLedger(rate=config.adversary.rate)
        self.adv_cfg = config.adversary
        self.recorder = Recorder()

        self.n_good_joins = 0
        self.n_bad_joins = 0
        self.n_departs = 0
        self.n_rejected_good = 0
        self.rejected_ids: list[str] = []
        self.valid = True
        self.invalid_reason: str | None = None

        # initial members are the time-0 joins; they are not replayed
        initial: list[str] = []
        events: list[Event] = []
        for seq, ev in enumerate(trace.events):
            if ev.time == 0.0 and ev.kind == JOIN:
                initial.append(ev.ident)
            else:
                kind = JOIN_GOOD if ev.kind == JOIN else DEPART_EV
                events.append(Event(ev.time, seq, kind, ev.ident))
        self.events = events
        self.ti = 0
        self.now = 0.0
        self.seq = len(trace.events)
        self.next_sample = config.sample_period
        self.next_tick = config.test_period if self.policy.periodic_test else math.inf
        self.next_burst = (
            config.adversary.burst_period if config.adversary.strategy == BURST else math.inf
        )
        self.finished = False

        cls = _FastBackend if config.backend == "fast" else _ReferenceBackend
        self.backend = cls(self)
        self.backend.bootstrap(initial)

    # -- sampling -----------------------------------------------------------

    def sample(self, t: float) -> None:
        b = self.backend
        size = b.size
        bad = b.n_bad
        frac = bad / size if size > 0 else 0.0
        self.recorder.add_sample(
            t, size, frac, b.jg_display(), self.ledger.algorithmic_total, self.adv_ledger.spent
        )
        if size > 0 and 6 * bad >= size:
            self.recorder.violation(t, "population", f"bad {bad}/{size}")
        if self.policy.periodic_test and size > 0 and 2 * bad >= size and self.valid:
            self.valid = False
            self.invalid_reason = f"bad fraction reached 1/2 at t={t:.10g}"

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimResult:
        if self.finished:
            raise EngineError("run() may only be called once")
        t_end = self.config.t_end
        if t_end > 0:
            while True:
                t_ev = self.events[self.ti].time if self.ti < len(self.events) else math.inf
                anchor = min(t_ev, self.next_sample, self.next_tick, t_end)
                self.backend.advance_adversary(self.now, anchor)
                self.now = anchor
                while (
                    self.ti < len(self.events)
                    and self.events[self.ti].time == anchor
                    and anchor <= t_end
                ):
                    ev = self.events[self.ti]
                    self.ti += 1
                    self._dispatch_trace(ev)
                if self.next_tick == anchor:
                    self.backend.apply_tick(anchor)
                    self.next_tick += self.config.test_period
                if self.next_sample == anchor:
                    self.sample(anchor)
                    self.next_sample += self.config.sample_period
                if anchor >= t_end:
                    break
            if self.recorder.last_sample_time() != t_end:
                self.sample(t_end)
        self.backend.final_close(t_end)
        self.finished = True
        return self._result()

    def _dispatch_trace(self, ev: Event) -> None:
        if ev.kind == JOIN_GOOD:
            self.backend.apply_good_join(ev.time, ev.ident)
        else:
            self.backend.apply_depart(ev.time, ev.ident)

    # -- single-event stepping ------------------------------------------------

    def step(self) -> Event | None:
        """Process exactly one protocol event; None at end of simulation.

        Adversary injections at the same instant as a trace event sort
        after it.  Sample rows are emitted as the clock passes their
        boundaries; they are not protocol events and are not returned.
        """
        if self.finished:
            return None
        t_end = self.config.t_end
        while True:
            t_ev = self.events[self.ti].time if self.ti < len(self.events) else math.inf
            bound = min(t_ev, self.next_tick, self.next_sample, t_end)
            t_inj = self.backend.pop_next_injection(self.now, bound)
            if t_inj is not None:
                self.now = t_inj
                self.seq += 1
                return Event(t_inj, self.seq, JOIN_BAD)
            if t_ev == bound and t_ev <= t_end:
                ev = self.events[self.ti]
                self.ti += 1
                self.now = ev.time
                self._dispatch_trace(ev)
                return ev
            if self.next_tick == bound and self.next_tick <= t_end:
                t = self.next_tick
                self.backend.apply_tick(t)
                self.next_tick += self.config.test_period
                self.now = t
                self.seq += 1
                return Event(t, self.seq, PERIODIC_TICK)
            if self.next_sample == bound and self.next_sample <= t_end and bound < math.inf:
                self.sample(self.next_sample)
                self.now = self.next_sample
                self.next_sample += self.config.sample_period
                continue
            # nothing due before or at t_end remains
            if t_end > 0 and self.recorder.last_sample_time() != t_end:
                self.sample(t_end)
            self.backend.final_close(t_end)
            self.finished = True
            return None

    def result(self) -> SimResult:
        """Assemble the result after run() or exhausted step() calls."""
        if not self.finished:
            raise EngineError("simulation still in progress")
        return self._result()

    # -- result ---------------------------------------------------------------

    def _result(self) -> SimResult:
        rec = self.recorder
        smp = rec.finalize_samples()
        samples = {
            "time": smp[:, 0].copy(),
            "size": smp[:, 1].astype(np.int64),
            "bad_fraction": smp[:, 2].copy(),
            "jg": smp[:, 3].copy(),
            "alg_total": smp[:, 4].astype(np.int64),
            "adv_total": smp[:, 5].astype(np.int64),
        }
        it_arr = rec.finalize_iterations()
        its = {}
        for i, k in enumerate(_ITER_FIELDS):
            col = it_arr[:, i]
            if k in ("start", "length", "jg_start", "jg_max"):
                its[k] = col.copy()
            else:
                its[k] = col.astype(np.int64)
        return SimResult(
            config=self.config,
            ledger=self.ledger,
            adversary=self.adv_ledger,
            samples=samples,
            iterations=its,
            intervals=rec.intervals,
            violations=rec.violations,
            valid=self.valid,
            invalid_reason=self.invalid_reason,
            good_joins=self.n_good_joins,
            bad_joins=self.n_bad_joins,
            bad_attempts=self.adv_ledger.attempts,
            rejected_good=self.n_rejected_good,
            rejected_ids=list(self.rejected_ids),
            departs=self.n_departs,
            final_good_join=rec.final_good_join,
            duration=self.config.t_end,
        )


def run(
    config: SimConfig, trace: ChurnTrace, adversary: AdversaryConfig | None = None
) -> SimResult:
    """Run one simulation to completion."""
    return Simulation(config, trace, adversary).run()
