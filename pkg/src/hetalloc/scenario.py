"""Scenario files: an INI-style description of radio constants, device types and CH levels.

    [radio]          bandwidth_mhz, period_ms, noise_dbm, epsilon
    [type.NAME]      kind, power_w, alpha2, packet_bytes, deadline_ms,
                     energy_budget_uj, qos_min_fraction, proportion, level
    [levels]         poisson_rate, max_level, mtd_top_level, quantization_c
    [sweep-defaults] sizes, mu, samples, seed, solvers

Each physical quantity accepts several unit suffixes (e.g. period_s or period_ms).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from hetalloc.hierarchy import LevelModel
from hetalloc.model import DeviceType, DomainError, Kind, RadioConstants, dbm_to_watts
from hetalloc.network import Network

SOLVERS = ("gne", "che", "equal")

# key suffix -> factor to SI, per quantity
_UNITS = {
    "bandwidth": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "period": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "noise": {"w": 1.0, "mw": 1e-3, "dbm": "dbm"},
    "power": {"w": 1.0, "mw": 1e-3, "dbm": "dbm"},
    "packet": {"bits": 1.0, "bytes": 8.0},
    "deadline": {"s": 1.0, "ms": 1e-3},
    "energy_budget": {"j": 1.0, "mj": 1e-3, "uj": 1e-6},
}


class ScenarioError(DomainError):
    """Invalid scenario file; the message starts with the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class SweepDefaults:
    sizes: tuple = (1000,)
    mu: tuple = (2.0,)
    samples: int = 1
    seed: int = 0
    solvers: tuple = SOLVERS


@dataclass(frozen=True)
class Scenario:
    radio: RadioConstants
    types: tuple
    proportions: tuple
    levels: LevelModel
    quantization_C: int = 5
    mu_multiplier: float = 2.0
    network_size: int = 1000
    defaults: SweepDefaults = field(default_factory=SweepDefaults)

    def __post_init__(self):
        if len(self.types) != len(self.proportions):
            raise ScenarioError("type", "one proportion per type")
        if self.network_size < 1:
            raise ScenarioError("network_size", "must be >= 1")
        if self.quantization_C < 1:
            raise ScenarioError("levels.quantization_c", "must be >= 1")

    def counts(self, size: Optional[int] = None) -> np.ndarray:
        """Largest-remainder rounding of size * proportions."""
        return largest_remainder(self.proportions, self.network_size if size is None else size)

    def network(self, size: Optional[int] = None) -> Network:
        return Network.from_counts(self.radio, self.types, self.counts(size))

    @property
    def n_htd_types(self) -> int:
        return sum(t.kind is Kind.HTD for t in self.types)

    @property
    def n_mtd_types(self) -> int:
        return sum(t.kind is Kind.MTD for t in self.types)


def largest_remainder(proportions, total: int) -> np.ndarray:
    p = np.asarray(proportions, dtype=float)
    raw = p * total
    counts = np.floor(raw).astype(int)
    short = total - int(counts.sum())
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def _quantity(sec: configparser.SectionProxy, path: str, name: str, required=True):
    hits = [(u, f) for u, f in _UNITS[name].items() if f"{name}_{u}" in sec]
    if len(hits) > 1:
        raise ScenarioError(f"{path}.{name}", "given in more than one unit")
    if not hits:
        if required:
            raise ScenarioError(f"{path}.{name}", "missing")
        return None
    unit, factor = hits[0]
    key = f"{name}_{unit}"
    v = _float(sec, f"{path}.{key}", key)
    return dbm_to_watts(v) if factor == "dbm" else v * factor


def _float(sec, path, key, default=None):
    if key not in sec:
        if default is None:
            raise ScenarioError(path, "missing")
        return default
    try:
        v = float(sec[key])
    except ValueError:
        raise ScenarioError(path, f"not a number: {sec[key]!r}") from None
    if not math.isfinite(v):
        raise ScenarioError(path, "must be finite")
    return v


def _int(sec, path, key, default=None):
    v = _float(sec, path, key, default)
    if v != int(v):
        raise ScenarioError(path, f"not an integer: {v!r}")
    return int(v)


def _list(sec, key, conv, default):
    if key not in sec:
        return default
    return tuple(conv(x.strip()) for x in sec[key].split(",") if x.strip())


def _wrap(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ScenarioError:
        raise
    except (DomainError, ValueError) as e:
        raise ScenarioError(path, str(e)) from None


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ScenarioError("file", f"parse error: {e}") from None

    if "radio" not in cp:
        raise ScenarioError("radio", "section missing")
    r = cp["radio"]
    radio = _wrap("radio", RadioConstants,
                  bandwidth=_quantity(r, "radio", "bandwidth"),
                  period=_quantity(r, "radio", "period"),
                  noise=_quantity(r, "radio", "noise"),
                  epsilon=_float(r, "radio.epsilon", "epsilon"))

    types, props, level_of = [], [], {}
    for name in cp.sections():
        if not name.startswith("type."):
            continue
        tname = name[len("type."):]
        s = cp[name]
        kind = s.get("kind", "").strip().upper()
        if kind not in ("HTD", "MTD"):
            raise ScenarioError(f"{name}.kind", f"must be HTD or MTD, got {kind!r}")
        common = dict(kind=Kind(kind), name=tname,
                      power=_quantity(s, name, "power"),
                      alpha2=_float(s, f"{name}.alpha2", "alpha2"))
        if kind == "MTD":
            for bad in ("energy_budget", "qos_min_fraction"):
                if any(k.startswith(bad) for k in s):
                    raise ScenarioError(f"{name}.{bad}", "not allowed for an MTD")
            dev = _wrap(name, DeviceType, **common,
                        packet_bits=_quantity(s, name, "packet"),
                        deadline=_quantity(s, name, "deadline"))
            if dev.deadline / radio.period < 1:
                raise ScenarioError(f"{name}.deadline", "shorter than one period")
        else:
            for bad in ("packet", "deadline"):
                if any(k.startswith(bad) for k in s):
                    raise ScenarioError(f"{name}.{bad}", "not allowed for an HTD")
            q = _float(s, f"{name}.qos_min_fraction", "qos_min_fraction", math.nan)
            dev = _wrap(name, DeviceType, **common,
                        energy_budget=_quantity(s, name, "energy_budget"),
                        qos_min_fraction=None if math.isnan(q) else q)
        types.append(dev)
        props.append(_float(s, f"{name}.proportion", "proportion", math.nan))
        if "level" not in s:
            raise ScenarioError(f"{name}.level", "missing")
        level_of[tname] = _int(s, f"{name}.level", "level")
    if not types:
        raise ScenarioError("type", "no [type.NAME] sections")

    lv = cp["levels"] if "levels" in cp else {}
    levels = _wrap("levels", LevelModel,
                   rate=_float(lv, "levels.poisson_rate", "poisson_rate", 1.0),
                   max_level=_int(lv, "levels.max_level", "max_level", max(level_of.values())),
                   mtd_top_level=_int(lv, "levels.mtd_top_level", "mtd_top_level"),
                   level_of_type=dict(level_of))
    _wrap("levels", levels.validate, types)
    C = _int(lv, "levels.quantization_c", "quantization_c", 5)

    props = np.array(props)
    given = ~np.isnan(props)
    if not given.any():
        # proportions default to the truncated level distribution
        f = levels.pmf
        props = np.array([f[level_of[t.name]] for t in types])
        props = props / props.sum()
    elif not given.all():
        missing = [t.name for t, g in zip(types, given) if not g]
        raise ScenarioError(f"type.{missing[0]}.proportion", "missing (give all or none)")
    if np.any(props < 0) or abs(props.sum() - 1) > 1e-9:
        raise ScenarioError("type.proportion", f"proportions must be >= 0 and sum to 1, got {props.sum():.12g}")

    sw = cp["sweep-defaults"] if "sweep-defaults" in cp else {}
    defaults = SweepDefaults(
        sizes=_list(sw, "sizes", int, SweepDefaults.sizes),
        mu=_list(sw, "mu", float, SweepDefaults.mu),
        samples=_int(sw, "sweep-defaults.samples", "samples", SweepDefaults.samples),
        seed=_int(sw, "sweep-defaults.seed", "seed", SweepDefaults.seed),
        solvers=_list(sw, "solvers", str.strip, SOLVERS),
    )
    bad = [s for s in defaults.solvers if s not in SOLVERS]
    if bad:
        raise ScenarioError("sweep-defaults.solvers", f"unknown solver {bad[0]!r}")
    if any(m <= 1 for m in defaults.mu):
        raise ScenarioError("sweep-defaults.mu", "multipliers must exceed 1")
    if not defaults.sizes or min(defaults.sizes) < 1:
        raise ScenarioError("sweep-defaults.sizes", "need positive sizes")
    if defaults.samples < 1:
        raise ScenarioError("sweep-defaults.samples", "must be >= 1")

    return Scenario(radio, tuple(types), tuple(float(p) for p in props), levels, C,
                    defaults.mu[0], defaults.sizes[0], defaults)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError("file", f"cannot read {p}: {e.strerror}") from None
    return parse_scenario(text)


def bundled_path(name: str = "reference"):
    return resources.files("hetalloc") / "data" / f"{name}.ini"


def load_bundled(name: str = "reference") -> Scenario:
    return parse_scenario(bundled_path(name).read_text(encoding="utf-8"))
