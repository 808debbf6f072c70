"""Adaptive entrance pricing with purge-based membership control.

This module holds the reference state machine for the estimating defense:
entrance puzzles priced by the count of recent joins, purges triggered by
membership turnover, committee rotation, and the interval-based good-join
rate estimator.  State here is kept as literal sets so every rule reads
exactly like its definition; the simulation engine has an equivalent
counter-based fast path that is cross-checked against this one in tests.

Membership identity: an ID that departs and rejoins is a fresh member.
Internally every join mints a token (ident, incarnation); set difference
and symmetric difference are taken over tokens, so departures tombstone
and resurrections never cancel turnover.

Pricing window: the entrance difficulty at time t is one plus the number
of join events (good and bad, whether or not those IDs are still members)
in the trailing half-open window (t - 1/rate_estimate, t].  The window is
a pure join-event history and is not reset by purges; the per-iteration
cost analysis and the observed sqrt(T) spend scaling both rely on prices
persisting across an iteration boundary.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

Token = tuple[str, int]


class ValidationError(ValueError):
    """A protocol operation was invoked outside its precondition."""


class EstimatorError(ValueError):
    """The join-rate estimator is not initialized (rate <= 0)."""


@dataclass
class CostLedger:
    """Cumulative puzzle-unit accounting, split by payer and purpose.

    ``alg_*`` is work done by good IDs, ``adv_*`` by the adversary.  The
    purge buckets hold recurring retention work (purge puzzles, and the
    periodic liveness tests of defenses that use them).  All fields are
    integers and only ever increase.  ``rows`` is the per-iteration
    breakdown, closed at each purge and at end of run.
    """

    alg_entrance: int = 0
    alg_purge: int = 0
    adv_entrance: int = 0
    adv_purge: int = 0
    rows: list["IterationRow"] = field(default_factory=list)

    @property
    def algorithmic_total(self) -> int:
        return self.alg_entrance + self.alg_purge

    @property
    def adversarial_total(self) -> int:
        return self.adv_entrance + self.adv_purge


@dataclass(frozen=True)
class IterationRow:
    iteration: int
    start: float
    length: float
    alg_entrance: int
    alg_purge: int
    adv_entrance: int
    adv_purge: int


@dataclass
class Committee:
    """A committee sample: size and ground-truth bad count.

    ``members`` is populated when the committee was drawn from an explicit
    set (bootstrap, or direct use of select_committee); rotations inside
    large simulations track only the counts, which is all any check needs.
    """

    size: int
    bad: int
    members: frozenset[Token] | None = None


@dataclass
class MemberInfo:
    is_good: bool
    join_time: float
    join_iteration: int


@dataclass
class SystemState:
    """Live membership plus iteration bookkeeping.

    ``join_log`` is the time-ordered trailing history of join timestamps
    used for pricing (see module docstring); ``n_a``/``n_d`` count joins
    and departures since ``iter_start``.
    """

    members: set[Token] = field(default_factory=set)
    info: dict[Token, MemberInfo] = field(default_factory=dict)
    incarnation: dict[str, int] = field(default_factory=dict)
    s_prev: frozenset[Token] = frozenset()
    iteration: int = 1
    n_a: int = 0
    n_d: int = 0
    join_log: list[float] = field(default_factory=list)
    committee: Committee = field(default_factory=lambda: Committee(0, 0))
    iter_start: float = 0.0
    # Ledger values at iteration start, for closing per-iteration rows.
    iter_cost_mark: tuple[int, int, int, int] = (0, 0, 0, 0)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def bad_count(self) -> int:
        return sum(1 for t in self.members if not self.info[t].is_good)

    def live_token(self, ident: str) -> Token | None:
        inc = self.incarnation.get(ident)
        if inc is None:
            return None
        token = (ident, inc)
        return token if token in self.members else None

    def mint(self, ident: str) -> Token:
        inc = self.incarnation.get(ident, -1) + 1
        self.incarnation[ident] = inc
        return (ident, inc)


@dataclass
class EstimatorState:
    """Interval estimator of the good join rate.

    ``s_est`` is the most recent membership snapshot whose set difference
    from the current membership reached 3/5 of the current size; ``l_est``
    is the time between the last two snapshot changes and ``jg_hat`` the
    resulting rate estimate |S|/l_est (seeded from configuration until the
    first interval completes).
    """

    s_est: frozenset[Token] = frozenset()
    l_est: float | None = None
    jg_hat: float = 1.0
    last_change: float = 0.0
    est_gen: int = 0


# =====================================================================
# Operations
# =====================================================================


def entrance_difficulty(state: SystemState, est: EstimatorState, t: float) -> int:
    """Price of a join at time t: joins in (t - 1/jg_hat, t], plus one.

    The "plus one" is the joining ID itself.  Earlier joins at exactly t
    (already logged) are inside the half-open window and count.
    """
    if est.jg_hat <= 0:
        raise EstimatorError("join-rate estimate not initialized")
    lo = t - 1.0 / est.jg_hat
    log = state.join_log
    return 1 + (bisect_right(log, t) - bisect_right(log, lo))


def on_join(
    state: SystemState,
    est: EstimatorState,
    ident: str,
    is_good: bool,
    t: float,
    ledger: CostLedger,
) -> int:
    """Admit a new member, book its entrance charge, return the charge."""
    if state.live_token(ident) is not None:
        raise ValidationError(f"duplicate live join of {ident!r}")
    charge = entrance_difficulty(state, est, t)
    token = state.mint(ident)
    state.members.add(token)
    state.info[token] = MemberInfo(is_good, t, state.iteration)
    state.n_a += 1
    state.join_log.append(t)
    if is_good:
        ledger.alg_entrance += charge
    else:
        ledger.adv_entrance += charge
    return charge


def on_depart(state: SystemState, ident: str, t: float) -> Token:
    """Process an announced departure of a live id."""
    token = state.live_token(ident)
    if token is None:
        raise ValidationError(f"departure of non-live id {ident!r}")
    state.members.discard(token)
    del state.info[token]
    state.n_d += 1
    return token


def purge_due(state: SystemState) -> bool:
    """True when joins plus departures reach 1/11 of the last purge size."""
    return 11 * (state.n_a + state.n_d) >= len(state.s_prev)


def select_committee(members, n0: int, c_comm: float, rng) -> set:
    """Uniform sample without replacement of size min(|S|, ceil(c*ln n0))."""
    pool = sorted(members)
    if not pool:
        raise ValidationError("cannot select a committee from an empty set")
    k = min(len(pool), math.ceil(c_comm * math.log(n0)))
    idx = rng.choice(len(pool), size=k, replace=False)
    return {pool[i] for i in idx}


def committee_size(n_members: int, n0: int, c_comm: float) -> int:
    return min(n_members, math.ceil(c_comm * math.log(n0)))


def rotate_committee(state: SystemState, n0: int, c_comm: float, rng) -> Committee:
    """Draw the post-purge committee composition.

    Only the size and the bad count ever feed back into any check, so the
    rotation draws the bad count hypergeometrically instead of sampling
    identities; select_committee remains available for explicit sets.
    """
    n = state.size
    k = committee_size(n, n0, c_comm)
    n_bad = state.bad_count
    bad_in = int(rng.hypergeometric(n_bad, n - n_bad, k)) if 0 < n_bad else 0
    return Committee(k, bad_in)


def execute_purge(
    state: SystemState,
    est: EstimatorState,
    retained_bad,
    t: float,
    ledger: CostLedger,
    rng,
    n0: int,
    c_comm: float,
) -> SystemState:
    """Run a purge: evict non-paying bad IDs, charge stayers, rotate.

    Every good ID answers the unit puzzle and is charged 1; a bad ID is
    retained only if present in ``retained_bad`` (the adversary paid 1 for
    it).  Closes the per-iteration cost row, snapshots membership as the
    new previous set, resets the iteration counters, and rotates the
    committee.  The join log is deliberately NOT cleared (see module
    docstring on pricing windows).
    """
    retained = set(retained_bad)
    evict = [
        tok
        for tok in state.members
        if not state.info[tok].is_good and tok not in retained
    ]
    for tok in evict:
        state.members.discard(tok)
        del state.info[tok]
    n_good = sum(1 for tok in state.members if state.info[tok].is_good)
    ledger.alg_purge += n_good
    ledger.adv_purge += len(retained & state.members)

    m = state.iter_cost_mark
    ledger.rows.append(
        IterationRow(
            state.iteration,
            state.iter_start,
            t - state.iter_start,
            ledger.alg_entrance - m[0],
            ledger.alg_purge - m[1],
            ledger.adv_entrance - m[2],
            ledger.adv_purge - m[3],
        )
    )

    state.s_prev = frozenset(state.members)
    state.iteration += 1
    state.n_a = 0
    state.n_d = 0
    state.iter_start = t
    state.iter_cost_mark = (
        ledger.alg_entrance,
        ledger.alg_purge,
        ledger.adv_entrance,
        ledger.adv_purge,
    )
    state.committee = rotate_committee(state, n0, c_comm, rng)
    return state


def estimator_update(state: SystemState, est: EstimatorState, t: float) -> bool:
    """Close the current interval if membership turned over enough.

    Triggered when |S_cur - S_est| >= (3/5)|S_cur| (literal set difference
    over member tokens).  On trigger: the interval length becomes the time
    since the last snapshot, the rate estimate becomes |S_cur| divided by
    that length, and the snapshot is replaced.  Called after every
    membership change.  A same-instant trigger (t equal to the last
    change) is deferred until time advances, since a zero-length interval
    has no defined rate; the condition persists because the difference
    only grows.
    """
    n = len(state.members)
    if n == 0:
        return False
    diff = len(state.members - est.s_est)
    if 5 * diff >= 3 * n and t > est.last_change:
        est.l_est = t - est.last_change
        est.jg_hat = n / est.l_est
        est.s_est = frozenset(state.members)
        est.last_change = t
        est.est_gen += 1
        return True
    return False


def prune_join_log(state: SystemState, est: EstimatorState, t: float) -> None:
    """Drop join-log entries that no future pricing window can reach.

    Any window set after an estimator update at time u reaches back at
    most (u - last_change)/|S| seconds, so entries older than the current
    window and older than a safety horizon are dead.  Keeps the log small
    on long runs without changing any price.
    """
    if est.jg_hat <= 0:
        return
    horizon = t - max(8.0, 4.0 / est.jg_hat)
    log = state.join_log
    cut = bisect_left(log, horizon)
    if cut > 256:
        del log[:cut]
