"""Initial system construction.

Stands in for the one-shot bootstrap problem: fabricate the state its
solution guarantees -- a known initial membership with at most an
alpha-fraction of bad IDs, a committee, and a seeded join-rate estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .churn import ConfigError
from .togcom import (
    Committee,
    EstimatorState,
    MemberInfo,
    SystemState,
    select_committee,
)

DEFAULT_WARMUP_SECONDS = 100.0


@dataclass(frozen=True)
class BootstrapConfig:
    """Initial population shape.

    ``initial_bad_fraction`` lets stress tests start with adversary IDs
    already inside (at most the adversary's compute fraction alpha);
    ``jg0`` seeds the rate estimator, defaulting to n0 spread over a
    nominal warmup period.
    """

    n0: int
    alpha: float = 1.0 / 18.0
    initial_bad_fraction: float = 0.0
    jg0: float | None = None
    warmup_seconds: float = DEFAULT_WARMUP_SECONDS
    c_comm: float = 3.0

    def check(self) -> None:
        if self.n0 < 1:
            raise ConfigError("n0 must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if not 0.0 <= self.initial_bad_fraction <= self.alpha:
            raise ConfigError("initial_bad_fraction must be in [0, alpha]")
        if self.jg0 is not None and self.jg0 <= 0:
            raise ConfigError("jg0 must be positive")
        if self.warmup_seconds <= 0:
            raise ConfigError("warmup_seconds must be positive")

    def initial_rate(self) -> float:
        return self.jg0 if self.jg0 is not None else self.n0 / self.warmup_seconds


def bootstrap(config: BootstrapConfig, rng) -> tuple[SystemState, EstimatorState]:
    """Build the time-0 state: members, committee, seeded estimator."""
    config.check()
    state = SystemState()
    n_bad = int(config.initial_bad_fraction * config.n0)
    for i in range(config.n0):
        token = state.mint(f"init{i}")
        is_good = i < config.n0 - n_bad
        state.members.add(token)
        state.info[token] = MemberInfo(is_good, 0.0, 0)
    state.s_prev = frozenset(state.members)

    members = select_committee(state.members, config.n0, config.c_comm, rng)
    bad_in = sum(1 for tok in members if not state.info[tok].is_good)
    state.committee = Committee(len(members), bad_in, frozenset(members))

    est = EstimatorState(
        s_est=frozenset(state.members),
        l_est=None,
        jg_hat=config.initial_rate(),
        last_change=0.0,
    )
    return state, est
