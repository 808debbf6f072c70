"""Churn traces: generation, parsing, validation.

A churn trace is the ground-truth record of good-ID join and departure
events that drives a simulation run.  Traces are synthesized from session
models (Weibull or exponential session lengths, Poisson arrivals) or
loaded from a text file with one event per line:

    time_seconds,id,join|depart

Lines starting with '#' are comments.  Join events at time 0 form the
initial population; they are bootstrap members and are never charged
entrance work by the simulator.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

JOIN = "join"
DEPART = "depart"

WEIBULL_SESSION = "weibull_session"
EXP_SESSION_POISSON = "exp_session_poisson_arrival"


class ConfigError(ValueError):
    """Invalid generator or simulation configuration."""


class TraceError(ValueError):
    """A churn trace violates its invariants.

    Carries the index of the first offending event (or -1 for file-level
    problems such as an unparsable line, where the line number is in the
    message instead).
    """

    def __init__(self, message: str, index: int = -1):
        super().__init__(f"{message} (event index {index})" if index >= 0 else message)
        self.index = index


@dataclass(frozen=True)
class ChurnEvent:
    time: float
    ident: str
    kind: str  # JOIN or DEPART


@dataclass
class ChurnTrace:
    """Time-ordered good-ID churn events plus the size of the initial set."""

    events: list[ChurnEvent] = field(default_factory=list)
    n_init: int = 0

    def __len__(self) -> int:
        return len(self.events)

    def duration(self) -> float:
        return self.events[-1].time if self.events else 0.0


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for a synthetic churn model.

    ``scale`` is the session-length scale in seconds (callers converting
    from minutes or hours do so before building the spec).  For the
    exponential family ``scale`` is the session mean and ``shape`` is
    ignored.
    """

    family: str
    shape: float = 1.0
    scale: float = 1.0
    arrival_mean: float = 1.0  # IDs per second
    n_init: int = 0
    duration: float = 0.0  # seconds of arrivals to generate

    def check(self) -> None:
        if self.family not in (WEIBULL_SESSION, EXP_SESSION_POISSON):
            raise ConfigError(f"unknown generator family: {self.family!r}")
        if self.shape <= 0 or self.scale <= 0:
            raise ConfigError("shape and scale must be positive")
        if self.arrival_mean <= 0:
            raise ConfigError("arrival_mean must be positive")
        if self.n_init < 0 or self.duration < 0:
            raise ConfigError("n_init and duration must be non-negative")


# =====================================================================
# Generation
# =====================================================================


def _generate(spec: GeneratorSpec, seed: int, session_sampler) -> ChurnTrace:
    """Shared arrival/session machinery for both generator families.

    Initial members join at t=0 with a fresh session draw; later IDs
    arrive by a Poisson process with the configured mean rate.  A
    departure is emitted only if the session ends within ``duration``
    (IDs still alive at the end of the trace simply have no departure).
    """
    spec.check()
    rng = np.random.default_rng(seed)

    init_sessions = session_sampler(rng, spec.n_init)

    # Poisson arrivals: exponential gaps, cumulated until past duration.
    arrivals: list[np.ndarray] = []
    t = 0.0
    # Draw in blocks to stay vectorized regardless of duration.
    block = max(64, int(spec.duration * spec.arrival_mean * 1.1) + 16)
    while t < spec.duration:
        gaps = rng.exponential(1.0 / spec.arrival_mean, size=block)
        times = t + np.cumsum(gaps)
        arrivals.append(times)
        t = float(times[-1])
    arrival_times = (
        np.concatenate(arrivals) if arrivals else np.empty(0, dtype=float)
    )
    arrival_times = arrival_times[arrival_times <= spec.duration]
    n_arr = arrival_times.size
    arr_sessions = session_sampler(rng, n_arr)

    times: list[float] = []
    idents: list[str] = []
    kinds: list[str] = []

    # Initial joins at exactly t=0, then their departures if in range.
    for i in range(spec.n_init):
        times.append(0.0)
        idents.append(f"i{i}")
        kinds.append(JOIN)
    dep_t = init_sessions
    dep_mask = dep_t <= spec.duration
    ev_times = np.concatenate(
        [
            arrival_times,
            dep_t[dep_mask],
            (arrival_times + arr_sessions)[
                (arrival_times + arr_sessions) <= spec.duration
            ],
        ]
    )
    ev_ident: list[str] = (
        [f"a{i}" for i in range(n_arr)]
        + [f"i{i}" for i in np.nonzero(dep_mask)[0]]
        + [
            f"a{i}"
            for i in np.nonzero((arrival_times + arr_sessions) <= spec.duration)[0]
        ]
    )
    ev_kind = (
        [JOIN] * n_arr
        + [DEPART] * int(dep_mask.sum())
        + [DEPART] * int(((arrival_times + arr_sessions) <= spec.duration).sum())
    )
    order = np.argsort(ev_times, kind="stable")
    for k in order:
        times.append(float(ev_times[k]))
        idents.append(ev_ident[k])
        kinds.append(ev_kind[k])

    # A join and its own departure can collide in time under argsort
    # stability only if the session length is exactly 0; nudge such
    # departures after the join by ordering joins first at equal times.
    events = [ChurnEvent(t_, i_, k_) for t_, i_, k_ in zip(times, idents, kinds)]
    events = _stable_fix_equal_times(events)
    trace = ChurnTrace(events=events, n_init=spec.n_init)
    validate(trace)
    return trace


def _stable_fix_equal_times(events: list[ChurnEvent]) -> list[ChurnEvent]:
    # Stable sort by time with joins before departures at equal times,
    # except a departure of an id must never precede its join.
    return sorted(
        events, key=lambda e: (e.time, 0 if e.kind == JOIN else 1)
    )


def gen_weibull(spec: GeneratorSpec, seed: int) -> ChurnTrace:
    """Generate a trace with Weibull(shape, scale)-distributed sessions."""
    if spec.family != WEIBULL_SESSION:
        raise ConfigError("gen_weibull requires the weibull_session family")

    def sampler(rng, n):
        return spec.scale * rng.weibull(spec.shape, size=n)

    return _generate(spec, seed, sampler)


def gen_exp_poisson(spec: GeneratorSpec, seed: int) -> ChurnTrace:
    """Generate a trace with exponential sessions and Poisson arrivals."""
    if spec.family != EXP_SESSION_POISSON:
        raise ConfigError(
            "gen_exp_poisson requires the exp_session_poisson_arrival family"
        )

    def sampler(rng, n):
        return rng.exponential(spec.scale, size=n)

    return _generate(spec, seed, sampler)


def generate(spec: GeneratorSpec, seed: int) -> ChurnTrace:
    """Dispatch to the generator for ``spec.family``."""
    if spec.family == WEIBULL_SESSION:
        return gen_weibull(spec, seed)
    return gen_exp_poisson(spec, seed)


# =====================================================================
# File format
# =====================================================================


def load_trace(source) -> ChurnTrace:
    """Parse a trace from a path or a file-like object.

    Raises TraceError with the offending line number on malformed input,
    and on any trace-invariant violation after parsing.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        raise TraceError(f"unreadable trace source: {source!r}")

    events: list[ChurnEvent] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise TraceError(f"line {lineno}: expected time,id,kind: {raw!r}")
        t_str, ident, kind = (p.strip() for p in parts)
        try:
            t = float(t_str)
        except ValueError:
            raise TraceError(f"line {lineno}: bad time {t_str!r}") from None
        if kind not in (JOIN, DEPART):
            raise TraceError(f"line {lineno}: bad kind {kind!r}")
        if not ident:
            raise TraceError(f"line {lineno}: empty id")
        events.append(ChurnEvent(t, ident, kind))

    n_init = sum(1 for e in events if e.time == 0.0 and e.kind == JOIN)
    trace = ChurnTrace(events=events, n_init=n_init)
    validate(trace)
    return trace


def serialize(trace: ChurnTrace) -> str:
    """Render a trace in the line format accepted by load_trace."""
    out = io.StringIO()
    for e in trace.events:
        out.write(f"{e.time:.10g},{e.ident},{e.kind}\n")
    return out.getvalue()


# =====================================================================
# Validation
# =====================================================================


def validate(trace: ChurnTrace) -> None:
    """Check the trace invariants, raising TraceError at the first hit.

    Invariants: non-decreasing times, non-negative times, every depart
    follows a join of the same id while live, no duplicate live joins,
    and n_init equals the count of joins at time 0.
    """
    live: set[str] = set()
    last_t = 0.0
    zero_joins = 0
    for i, e in enumerate(trace.events):
        if e.time < 0:
            raise TraceError("negative event time", i)
        if e.time < last_t:
            raise TraceError("event times out of order", i)
        last_t = e.time
        if e.kind == JOIN:
            if e.ident in live:
                raise TraceError(f"duplicate live join of {e.ident!r}", i)
            live.add(e.ident)
            if e.time == 0.0:
                zero_joins += 1
        elif e.kind == DEPART:
            if e.ident not in live:
                raise TraceError(f"departure of {e.ident!r} before join", i)
            live.discard(e.ident)
        else:
            raise TraceError(f"unknown event kind {e.kind!r}", i)
    if trace.n_init != zero_joins:
        raise TraceError(
            f"n_init={trace.n_init} but {zero_joins} joins at time 0", 0
        )
