"""Budget-constrained Sybil adversary.

The adversary earns puzzle-solving capacity at a constant rate and
converts it into bad-ID joins against whatever entrance price the active
defense quotes.  Two strategies:

* greedy: inject a bad ID at the earliest instant the accumulated,
  unspent budget covers the current entrance price.
* burst: bank budget for a fixed period, then inject the largest
  affordable batch back-to-back at one instant (each batch member pays
  the escalating price the previous ones created).

Work paid for a join that an admission classifier then refuses is
forfeited: it leaves the adversary's budget but is booked to neither
cost ledger, since no entrance happened.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

GREEDY = "greedy"
BURST = "burst"


@dataclass(frozen=True)
class AdversaryConfig:
    """Attack parameters.

    ``rate`` is the spend rate T in puzzle-units per second.  With
    ``pays_purge`` the adversary answers purge (or periodic-test) puzzles
    for as many of its live IDs as the unspent budget affords, oldest
    first; without it, bad IDs are abandoned at every purge.
    """

    rate: float = 0.0
    strategy: str = GREEDY
    pays_purge: bool = False
    burst_period: float = 60.0

    def check(self) -> None:
        if self.rate < 0:
            raise ValueError("adversary rate must be non-negative")
        if self.strategy not in (GREEDY, BURST):
            raise ValueError(f"unknown adversary strategy: {self.strategy!r}")
        if self.strategy == BURST and self.burst_period <= 0:
            raise ValueError("burst_period must be positive")


@dataclass
class AdversaryLedger:
    """Budget bookkeeping: accrual is rate*t, spending never exceeds it."""

    rate: float
    spent: int = 0
    attempts: int = 0
    admitted: int = 0

    def accrued(self, t: float) -> float:
        return self.rate * t

    def available(self, t: float) -> float:
        return self.rate * t - self.spent


def earliest_affordable(spent: int, rate: float, price: int, not_before: float) -> float:
    """First instant at or after ``not_before`` when the budget covers price."""
    return max(not_before, (spent + price) / rate)


def burst_batch_size(budget: float, base_count: int = 0) -> int:
    """Largest k whose escalating batch cost fits in ``budget``.

    With ``base_count`` joins already in the pricing window, the j-th
    batch member pays base_count + j, so k members cost
    k*base_count + k(k+1)/2.  Closed form with a neighborhood fix-up for
    float rounding; cross-checked against sequential price simulation in
    the tests.
    """
    if budget < base_count + 1:
        return 0
    b = 2 * base_count + 1
    k = int((math.sqrt(b * b + 8.0 * budget) - b) / 2.0)
    while k * base_count + k * (k + 1) // 2 > budget:
        k -= 1
    while (k + 1) * base_count + (k + 1) * (k + 2) // 2 <= budget:
        k += 1
    return max(k, 0)


def purge_retention(
    config: AdversaryConfig,
    ledger: AdversaryLedger,
    n_bad_live: int,
    t: float,
) -> int:
    """How many bad IDs the adversary keeps through a unit-price test.

    Returns the retained count (oldest IDs first by convention of the
    caller); the payment is booked here.  A non-paying adversary retains
    nothing.
    """
    if not config.pays_purge or n_bad_live == 0:
        return 0
    afford = int(ledger.available(t))
    keep = min(n_bad_live, max(afford, 0))
    ledger.spent += keep
    return keep
