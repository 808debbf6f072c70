"""Flat key=value configuration files with section prefixes.

Example::

    # attack sweep on generated churn
    experiment.kind = avt_sweep
    experiment.network = gnutella
    experiment.runs = 5
    adversary.rate = 1024
    defense.name = togcom
    defense.h3_accuracy = 0.98

Sections: ``experiment.``, ``churn.``, ``adversary.``, ``defense.``,
``bootstrap.``.  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import os

from .adversary import AdversaryConfig
from .churn import ConfigError
from .engine import SimConfig
from .experiments import ExperimentSpec
from .heuristics import HeuristicConfig

_KNOWN_PREFIXES = ("experiment.", "churn.", "adversary.", "defense.", "bootstrap.")


def parse_config(source) -> dict[str, str]:
    """Parse a config file (path or file-like) into a flat dict."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(source)
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value: {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key.startswith(_KNOWN_PREFIXES):
            raise ConfigError(f"line {lineno}: unknown section in key {key!r}")
        out[key] = value
    return out


def _get(cfg, key, cast, default):
    if key not in cfg:
        return default
    raw = cfg[key]
    if cast is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {cast.__name__}, got {raw!r}") from None


def experiment_spec(cfg: dict[str, str]) -> ExperimentSpec:
    t_raw = cfg.get("experiment.t_values")
    kw = dict(
        kind=_get(cfg, "experiment.kind", str, "avt_sweep"),
        network=_get(cfg, "experiment.network", str, "gnutella"),
        runs=_get(cfg, "experiment.runs", int, 5),
        seed=_get(cfg, "experiment.seed", int, 1),
        sim_seconds=_get(cfg, "experiment.sim_seconds", float, 2000.0),
        out_dir=_get(cfg, "experiment.out_dir", str, "."),
        epoch_target=_get(cfg, "experiment.epoch_target", int, 40),
        alpha=_get(cfg, "experiment.alpha", float, 1.0 / 18.0),
        jobs=_get(cfg, "experiment.jobs", int, 1),
    )
    if t_raw:
        kw["t_values"] = tuple(float(v) for v in t_raw.split(",") if v.strip())
    if "experiment.trace_seconds" in cfg:
        kw["trace_seconds"] = _get(cfg, "experiment.trace_seconds", float, None)
    if "experiment.defenses" in cfg:
        kw["defenses"] = tuple(
            d.strip() for d in cfg["experiment.defenses"].split(",") if d.strip()
        )
    return ExperimentSpec(**kw)


def sim_config(cfg: dict[str, str], spec: ExperimentSpec) -> SimConfig:
    heur = HeuristicConfig(
        h1=_get(cfg, "defense.h1", bool, False),
        h2=_get(cfg, "defense.h2", bool, False),
        h3_accuracy=_get(cfg, "defense.h3_accuracy", float, 0.0),
        h2_margin=_get(cfg, "defense.h2_margin", float, 1.0 / 60.0),
        rate_bracket_high=_get(cfg, "defense.rate_bracket_high", float, 160.0),
    )
    adv = AdversaryConfig(
        rate=_get(cfg, "adversary.rate", float, 0.0),
        strategy=_get(cfg, "adversary.strategy", str, "greedy"),
        pays_purge=_get(cfg, "adversary.pays_purge", bool, False),
        burst_period=_get(cfg, "adversary.burst_period", float, 60.0),
    )
    return SimConfig(
        t_end=spec.sim_seconds,
        seed=spec.seed,
        defense=_get(cfg, "defense.name", str, "togcom"),
        alpha=spec.alpha,
        adversary=adv,
        heuristics=heur,
        jg0=_get(cfg, "bootstrap.jg0", float, None),
        warmup_seconds=_get(cfg, "bootstrap.warmup_seconds", float, 100.0),
        c_comm=_get(cfg, "defense.c_comm", float, 3.0),
        test_period=_get(cfg, "defense.test_period", float, 5.0),
        test_cost=_get(cfg, "defense.test_cost", int, 1),
        gmcom_failure_factor=_get(cfg, "defense.gmcom_failure_factor", float, 10.0),
        sample_period=_get(cfg, "defense.sample_period", float, 1.0),
        backend=_get(cfg, "defense.backend", str, "fast"),
    )
