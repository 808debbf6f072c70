"""Purge-deferral and admission heuristics layered on the base defense.

* symmetric-difference trigger (h1): purge when the symmetric difference
  between the current membership and the last purge snapshot reaches 1/11
  of the snapshot, instead of counting raw join/depart events.  An ID
  cycling join/depart contributes nothing at the cycle boundaries, so
  purges are never more frequent than the baseline rule.
* bad-fraction bound (h2): maintain a certified upper bound on the bad
  fraction and purge only when the bound approaches the 1/6 population
  limit.  Joins this iteration minus a conservative guaranteed-good
  credit (elapsed * rate_estimate / rate_bracket_high, which never
  overstates good joins) are treated as possibly bad.  A purge
  re-validates every stayer with a unit puzzle, so the carried suspicion
  resets to zero at each purge; this accounting is sound for adversaries
  that abandon their IDs at purges (the replication setting), and the
  soundness is asserted against ground truth in every simulated run.
* classifier gate (h3): an admission classifier with the given accuracy
  refuses entry to IDs it labels bad.  A refused ID pays no booked
  entrance charge and never becomes a member; the work the adversary
  already sank into a refused join is forfeited from its budget.

Composition: with both h1 and h2 enabled, a purge fires only when both
deem it necessary, and h2's invariant-risk trigger acts as a forced
override; since h2's risk line is also its necessity signal, the combined
trigger reduces to h2's risk line (h1 alone still gates when h2 is off).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

POPULATION_LIMIT = 1.0 / 6.0


@dataclass(frozen=True)
class HeuristicConfig:
    """Feature switches; ``h3_accuracy`` of 0 disables the classifier."""

    h1: bool = False
    h2: bool = False
    h3_accuracy: float = 0.0
    h2_margin: float = 1.0 / 60.0
    # Upper bracket of the estimator relative to the true good rate, used
    # to discount the guaranteed-good share of joins.  Calibratable from
    # the assumption-measurement experiment for the target network.
    rate_bracket_high: float = 160.0

    def check(self) -> None:
        if not 0.0 <= self.h3_accuracy <= 1.0:
            raise ValueError("h3_accuracy must be in [0, 1]")
        if self.h2_margin < 0 or self.h2_margin >= POPULATION_LIMIT:
            raise ValueError("h2_margin must be in [0, 1/6)")
        if self.rate_bracket_high <= 0:
            raise ValueError("rate_bracket_high must be positive")

    @property
    def any_enabled(self) -> bool:
        return self.h1 or self.h2 or self.h3_accuracy > 0


def h1_purge_due(s_cur, s_prev) -> bool:
    """Symmetric-difference trigger: |S_cur xor S_prev| >= |S_prev|/11."""
    sym = len(set(s_cur) ^ set(s_prev))
    return 11 * sym >= len(s_prev)


def h1_purge_due_counts(symdiff: int, s_prev_size: int) -> bool:
    """Counter form of the symmetric-difference trigger."""
    return 11 * symdiff >= s_prev_size


def h2_suspect_joins(n_a: int, elapsed: float, jg_hat: float, rate_bracket_high: float) -> int:
    """Joins this iteration not covered by the guaranteed-good credit."""
    credit = math.floor(elapsed * jg_hat / rate_bracket_high)
    return max(0, n_a - credit)


def h2_bad_upper_bound(
    n_a: int,
    elapsed: float,
    jg_hat: float,
    size: int,
    carried_bad: int,
    rate_bracket_high: float,
) -> float:
    """Certified upper bound on the current bad fraction."""
    if size <= 0:
        return 0.0
    suspects = h2_suspect_joins(n_a, elapsed, jg_hat, rate_bracket_high)
    return (carried_bad + suspects) / size


def h2_purge_due(bound: float, margin: float) -> bool:
    """Invariant-risk trigger: the bound plus margin reaches the 1/6 limit."""
    return bound + margin >= POPULATION_LIMIT


def h3_admit(is_good: bool, accuracy: float, rng) -> bool:
    """Classifier verdict for one joining ID.

    A good ID is admitted with probability ``accuracy``; a bad ID is
    admitted with probability 1 - accuracy.  ``accuracy`` of 0 means the
    gate is disabled and everything is admitted.
    """
    if accuracy <= 0.0:
        return True
    u = float(rng.random())
    return u < accuracy if is_good else u >= accuracy
