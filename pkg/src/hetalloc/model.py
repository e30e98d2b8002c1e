"""Radio and QoS math shared by the GNE and cognitive-hierarchy solvers.

Rates and thresholds use base-2 logarithms, so rates come out in bits/s.
Everything is SI: watts, seconds, hertz, joules, bits.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

EULER_GAMMA = 0.5772156649015329
LN2 = math.log(2.0)


class DomainError(ValueError):
    """Input outside the domain of a model formula."""


class ContractViolation(RuntimeError):
    """An operation was called in a way its contract forbids."""


class InfeasibleScenario(DomainError):
    """Minimum fractions of the population already exceed the period."""


class DegenerateInputWarning(RuntimeWarning):
    pass


class Kind(str, enum.Enum):
    HTD = "HTD"
    MTD = "MTD"


@dataclass(frozen=True)
class RadioConstants:
    bandwidth: float  # W, hertz
    period: float  # T, seconds
    noise: float  # sigma^2, watts
    epsilon: float  # deadline-violation bound

    def __post_init__(self):
        for name in ("bandwidth", "period", "noise", "epsilon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if not self.epsilon < 1:
            raise DomainError(f"epsilon must be < 1, got {self.epsilon!r}")

    @property
    def slot_capacity(self) -> float:
        """T*W: bits per unit of log2(1+snr) over a whole period."""
        return self.period * self.bandwidth


@dataclass(frozen=True)
class DeviceType:
    kind: Kind
    power: float
    alpha2: float
    packet_bits: Optional[float] = None  # MTD only
    deadline: Optional[float] = None  # seconds, MTD only
    energy_budget: Optional[float] = None  # joules, HTD only
    name: str = ""
    # HTD fraction below which QoS counts as unmet; None means the energy cap
    qos_min_fraction: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not (self.power > 0 and math.isfinite(self.power)):
            raise DomainError(f"{self.name or 'device'}: power must be > 0")
        if not (self.alpha2 > 0 and math.isfinite(self.alpha2)):
            raise DomainError(f"{self.name or 'device'}: alpha2 must be > 0")
        if self.kind is Kind.MTD:
            if self.packet_bits is None or not self.packet_bits > 0:
                raise DomainError(f"{self.name or 'MTD'}: packet_bits required and > 0")
            if self.deadline is None or not self.deadline > 0:
                raise DomainError(f"{self.name or 'MTD'}: deadline required and > 0")
            if self.energy_budget is not None or self.qos_min_fraction is not None:
                raise DomainError(f"{self.name or 'MTD'}: energy_budget/qos_min_fraction are HTD-only")
        else:
            if self.energy_budget is None or not self.energy_budget > 0:
                raise DomainError(f"{self.name or 'HTD'}: energy_budget required and > 0")
            if self.packet_bits is not None or self.deadline is not None:
                raise DomainError(f"{self.name or 'HTD'}: packet_bits/deadline are MTD-only")
            if self.qos_min_fraction is not None and not 0 <= self.qos_min_fraction <= 1:
                raise DomainError(f"{self.name or 'HTD'}: qos_min_fraction must be in [0, 1]")

    def snr_scale(self, rc: RadioConstants) -> float:
        """Mean received SNR alpha^2 P / sigma^2."""
        return self.alpha2 * self.power / rc.noise

    def slots(self, rc: RadioConstants) -> float:
        """Deadline measured in periods, t = d / T."""
        self._need(Kind.MTD)
        return self.deadline / rc.period

    def _need(self, kind: Kind):
        if self.kind is not kind:
            raise ContractViolation(f"operation needs a {kind.value}, got {self.kind.value}")


# --- exponential integral -------------------------------------------------


def scaled_exp1(x: float) -> float:
    """Return e^x * E1(x) for x > 0.

    Power series below 1, modified Lentz continued fraction above.
    """
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"scaled_exp1 needs finite x > 0, got {x!r}")
    if x < 1.0:
        total = 0.0
        term = 1.0
        k = 1
        while True:
            term *= -x / k
            add = term / k
            total += add
            if abs(add) < 1e-17 * max(abs(total), 1e-300) or k > 200:
                break
            k += 1
        e1 = -EULER_GAMMA - math.log(x) - total
        return math.exp(x) * e1
    # E1(x) e^x = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def exp1(x: float) -> float:
    return scaled_exp1(x) * math.exp(-x)


# --- rates -----------------------------------------------------------------


def ergodic_rate_coefficient(dev: DeviceType, rc: RadioConstants) -> float:
    """E[W log2(1 + |h|^2 P / sigma^2)] with |h|^2 ~ Exp(mean alpha^2)."""
    return rate_coefficient(dev.snr_scale(rc), rc.bandwidth)


def rate_coefficient(snr_scale: float, bandwidth: float) -> float:
    if not (math.isfinite(snr_scale) and math.isfinite(bandwidth)):
        raise DomainError("non-finite input to rate coefficient")
    if snr_scale <= 0 or bandwidth <= 0:
        raise DomainError("snr scale and bandwidth must be > 0")
    return bandwidth * scaled_exp1(1.0 / snr_scale) / LN2


# --- threshold <-> fraction (vectorised helpers) ---------------------------


def fraction_for(bits, gamma, rc: RadioConstants):
    """Time fraction b / (T W log2(1+gamma)); inf gamma maps to 0."""
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        return np.asarray(bits, dtype=float) * LN2 / (rc.slot_capacity * np.log1p(gamma))


def threshold_for(bits, tau, rc: RadioConstants):
    """Inverse of fraction_for: 2^(b / (T W tau)) - 1; tau <= 0 maps to inf."""
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        expo = np.asarray(bits, dtype=float) / (rc.slot_capacity * tau)
        out = np.expm1(expo * LN2)
    return np.where(tau > 0, out, np.inf)


def threshold_fraction(dev: DeviceType, rc: RadioConstants, gamma: float) -> float:
    dev._need(Kind.MTD)
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma!r}")
    return float(fraction_for(dev.packet_bits, gamma, rc))


def threshold_for_fraction(dev: DeviceType, rc: RadioConstants, tau: float) -> float:
    dev._need(Kind.MTD)
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau!r}")
    return float(threshold_for(dev.packet_bits, tau, rc))


# --- success probability, deadlines, energy --------------------------------


def success_probability(dev: DeviceType, rc: RadioConstants, gamma: float) -> float:
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma!r}")
    return math.exp(-gamma / dev.snr_scale(rc))


def deadline_violation(p: float, t_slots: float) -> float:
    """Pr[T_i >= t] = (1 - p)^t for geometric retransmissions."""
    if t_slots < 1:
        raise DomainError(f"t_slots must be >= 1, got {t_slots!r}")
    if p == 0:
        warnings.warn("success probability is 0; deadline is always violated",
                      DegenerateInputWarning, stacklevel=2)
        return 1.0
    if not 0 < p <= 1:
        raise DomainError(f"p must be in (0, 1], got {p!r}")
    return (1.0 - p) ** t_slots


def energy_for(power, bits, gamma, snr_scale, rc: RadioConstants):
    """Expected MTD energy P b / (W log2(1+gamma) e^{-gamma/snr}), vectorised."""
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return (np.asarray(power) * np.asarray(bits) * LN2
                / (rc.bandwidth * np.log1p(gamma))
                * np.exp(gamma / np.asarray(snr_scale)))


def expected_mtd_energy(dev: DeviceType, rc: RadioConstants, gamma: float) -> float:
    dev._need(Kind.MTD)
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma!r}")
    return float(energy_for(dev.power, dev.packet_bits, gamma, dev.snr_scale(rc), rc))


# --- critical thresholds ---------------------------------------------------


def solve_interior_optimum(snr_scale, hint=None, rtol: float = 1e-12):
    """Solve (1+g) ln(1+g) = snr_scale for g > 0 by bisection, elementwise.

    The bracket starts at [0, max(hint, 1)] and the upper end doubles until
    the sign changes.
    """
    s = np.atleast_1d(np.asarray(snr_scale, dtype=float))
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise DomainError("alpha^2 P / sigma^2 must be finite and > 0")
    hi = np.ones_like(s) if hint is None else np.maximum(np.atleast_1d(hint).astype(float), 1.0)
    hi = np.broadcast_to(hi, s.shape).copy()

    def f(g):
        return (1.0 + g) * np.log1p(g) - s

    while np.any(f(hi) <= 0):
        hi = np.where(f(hi) <= 0, hi * 2.0, hi)
    lo = np.zeros_like(s)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= rtol * hi):
            break
    out = 0.5 * (lo + hi)
    return out if np.ndim(snr_scale) else float(out[0])


def upper_bound_for(snr_scale, slots, epsilon):
    """-snr ln(1 - eps^(1/t)), vectorised."""
    root = np.power(epsilon, 1.0 / np.asarray(slots, dtype=float))
    if np.any(root >= 1):
        raise DomainError("eps^(1/t) >= 1: no SNR threshold meets the deadline")
    return -np.asarray(snr_scale, dtype=float) * np.log1p(-root)


def interior_optimum_gamma(dev: DeviceType, rc: RadioConstants) -> float:
    dev._need(Kind.MTD)
    return solve_interior_optimum(dev.snr_scale(rc), hint=gamma_upper_bound(dev, rc))


def gamma_upper_bound(dev: DeviceType, rc: RadioConstants) -> float:
    dev._need(Kind.MTD)
    t = dev.slots(rc)
    if t < 1:
        raise DomainError(f"deadline shorter than one period (t={t})")
    return float(upper_bound_for(dev.snr_scale(rc), t, rc.epsilon))


# --- utilities -------------------------------------------------------------


def htd_utility(dev: DeviceType, rc: RadioConstants, tau: float) -> float:
    dev._need(Kind.HTD)
    return ergodic_rate_coefficient(dev, rc) * tau


def mtd_utility(dev: DeviceType, rc: RadioConstants, gamma: float) -> float:
    dev._need(Kind.MTD)
    return -expected_mtd_energy(dev, rc, gamma)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3
