"""Comparison defenses: constant pricing, ratio pricing, periodic testing,
and a closed-form recurring-work scheme.

* ccom: entrance cost is always 1; purge machinery identical to the
  estimating defense.
* gmcom: entrance cost is the measured total join rate of the current
  iteration divided by the previous iteration's rate, floored at 1.  The
  estimate is total-rate based and therefore collapses under attack; once
  the measured rate exceeds a failure factor times the estimate the
  defense latches into failure mode and prices everything at 1 for the
  rest of the run (observably identical to ccom from then on).
* sybilcontrol: every live ID is tested with a unit puzzle every 5
  seconds; IDs that do not answer are dropped.  No purges.
* remp: per-ID recurring work sized in closed form from a maximum
  tolerated attack rate; never simulated event by event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class GMComState:
    """Ratio-pricing estimator state.

    ``jg_estimate`` is the previous iteration's total join rate;
    ``failure_mode`` latches permanently once the current rate exceeds
    ``failure_factor`` times the estimate (charges are computed before the
    latch check, so the join that reveals the failure still pays the
    inflated price).
    """

    jg_estimate: float
    failure_factor: float = 10.0
    failure_mode: bool = False
    measured_iter_rate: float = 0.0


def gmcom_entrance(gm: GMComState) -> int:
    """Entrance price from the current measured/estimated rate ratio."""
    if gm.failure_mode:
        return 1
    if gm.jg_estimate <= 0:
        gm.failure_mode = True
        return 1
    if math.isinf(gm.measured_iter_rate):
        return 1  # degenerate zero-elapsed instant; latch handles it
    return int(math.ceil(max(1.0, gm.measured_iter_rate / gm.jg_estimate)))


def gmcom_measure(n_joins_with_new: int, elapsed: float) -> float:
    """Total join rate of the current iteration, counting the arriving ID."""
    if elapsed <= 0.0:
        return math.inf
    return n_joins_with_new / elapsed


def gmcom_price_at(gm: GMComState, n_a: int, elapsed: float) -> int:
    """Price a hypothetical join arriving now (used for quoting and charging)."""
    gm.measured_iter_rate = gmcom_measure(n_a + 1, elapsed)
    return gmcom_entrance(gm)


def gmcom_after_join(gm: GMComState, n_a: int, elapsed: float) -> None:
    """Failure detection, run after the join was charged."""
    rate = gmcom_measure(n_a, elapsed)
    if rate > gm.failure_factor * gm.jg_estimate:
        gm.failure_mode = True


def gmcom_close_iteration(gm: GMComState, n_a: int, length: float) -> None:
    """Carry the finished iteration's total join rate as the new estimate."""
    if length > 0:
        gm.jg_estimate = n_a / length


def ccom_entrance() -> int:
    """Constant unit entrance cost."""
    return 1


# =====================================================================
# SybilControl (periodic-test cost model)
# =====================================================================

SYBILCONTROL_TEST_PERIOD = 5.0
SYBILCONTROL_TEST_COST = 1


def sybilcontrol_tick_charges(n_good_live: int, n_bad_kept: int, test_cost: int = SYBILCONTROL_TEST_COST) -> tuple[int, int]:
    """Per-tick puzzle work: (good-side, adversary-side) puzzle units."""
    return n_good_live * test_cost, n_bad_kept * test_cost


# =====================================================================
# REMP (closed form)
# =====================================================================


@dataclass(frozen=True)
class RempParams:
    """Recurring-work scheme sized for attacks up to ``t_max``."""

    t_max: float
    alpha: float

    def spend_rate(self) -> float:
        return remp_spend_rate(self.alpha, self.t_max)

    def valid_for(self, attack_rate: float) -> bool:
        return attack_rate <= self.t_max


def remp_spend_rate(alpha: float, t_max: float) -> float:
    """Total good-side spend rate (1-alpha)*t_max/alpha.

    Constant in the realized attack rate; the scheme only guarantees a
    bad-ID minority for attacks up to t_max.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    return (1.0 - alpha) * t_max / alpha
