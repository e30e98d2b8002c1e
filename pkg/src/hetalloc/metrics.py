"""Baselines and evaluation: centralized optima, PoA/PoB, QoS share, equal-time policy, overhead."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from hetalloc import model
from hetalloc.model import InfeasibleScenario
from hetalloc.network import Network

QOS_RTOL = 1e-9


@dataclass(frozen=True)
class OverheadParams:
    B_N: int = 14  # carried for reference; the packet formula below leaves it out
    B_alpha: int = 4
    B_f: int = 7
    B_b: int = 10
    B_t: int = 10
    B_E: int = 7
    bits_per_fraction: int = 10
    rounds: int = 3

    @property
    def per_bin(self) -> int:
        return 2 * self.B_f  # 14 bits per quantized channel entry

    @property
    def B_M(self) -> int:
        return self.B_b + self.B_t

    @property
    def B_H(self) -> int:
        return self.B_E


@dataclass(frozen=True)
class MetricsReport:
    total_htd_rate: float
    total_mtd_energy: float
    qos_satisfied_pct: float
    poa_htd: float = math.nan
    poa_mtd: float = math.nan
    pob_htd: float = math.nan
    pob_mtd: float = math.nan
    overhead_che_bytes: Optional[int] = None
    overhead_gne_bits: Optional[int] = None


@dataclass(frozen=True)
class CentralizedOptimum:
    max_htd_rate: float
    min_mtd_energy: float
    rate_fractions: np.ndarray
    energy_fractions: np.ndarray


def _energy_slope(network: Network, idx: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """d(energy)/d(tau) for MTDs idx at fractions tau."""
    c = network.bits[idx] / network.radio.slot_capacity
    rho = network.snr[idx]
    x = c / tau
    g = np.expm1(x * model.LN2)
    with np.errstate(over="ignore"):
        return (network.power[idx] * network.radio.period * np.exp(g / rho)
                * (1.0 - (g + 1.0) * model.LN2 * x / rho))


def _min_energy_fractions(network: Network) -> np.ndarray:
    """MTD fractions minimizing total energy subject to sum <= 1."""
    m = np.flatnonzero(network.is_mtd)
    out = np.zeros(len(network))
    if m.size == 0:
        return out
    lo, hi = network.tau_ub[m], network.pref[m]
    if hi.sum() <= 1.0:
        out[m] = hi
        return out
    if lo.sum() > 1.0:
        raise InfeasibleScenario("MTD deadline fractions alone exceed the period")

    def taus(lam):
        # per device: largest tau in [lo, hi] with -slope(tau) >= lam (slope rises with tau)
        a, b = lo.copy(), hi.copy()
        for _ in range(200):
            mid = 0.5 * (a + b)
            steep = -_energy_slope(network, m, mid) >= lam
            a = np.where(steep, mid, a)
            b = np.where(steep, b, mid)
        return a

    lam_lo, lam_hi = 0.0, 1.0
    while taus(lam_hi).sum() > 1.0:
        lam_hi *= 4.0
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        if taus(lam).sum() > 1.0:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo <= 1e-13 * lam_hi:
            break
    out[m] = taus(lam_hi)
    return out


def _max_rate_fractions(network: Network) -> np.ndarray:
    """Greedy fill of the time left after MTD deadline fractions, best channels first."""
    out = np.zeros(len(network))
    h = np.flatnonzero(network.is_htd)
    left = 1.0 - network.tau_ub[network.is_mtd].sum()
    if left < 0:
        raise InfeasibleScenario("MTD deadline fractions alone exceed the period")
    for i in h[np.argsort(-network.rate_coef[h], kind="stable")]:
        take = min(network.htd_cap[i], left)
        out[i] = take
        left -= take
        if left <= 0:
            break
    return out


def centralized_optimum(network: Network) -> CentralizedOptimum:
    rf = _max_rate_fractions(network)
    ef = _min_energy_fractions(network)
    return CentralizedOptimum(float(network.htd_rate(rf).sum()),
                              float(network.mtd_energy(ef).sum()), rf, ef)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def poa(network: Network, gne_samples: Sequence, opt: Optional[CentralizedOptimum] = None) -> tuple:
    """(PoA_HTD, PoA_MTD) over the sampled equilibria."""
    if len(gne_samples) == 0:
        raise ValueError("need at least one GNE sample")
    opt = opt or centralized_optimum(network)
    totals = [network.totals(getattr(p, "fractions", p)) for p in gne_samples]
    worst_rate = min(t[0] for t in totals)
    worst_energy = max(t[1] for t in totals)
    return _ratio(opt.max_htd_rate, worst_rate), _ratio(worst_energy, opt.min_mtd_energy)


def pob(network: Network, fractions, opt: Optional[CentralizedOptimum] = None) -> tuple:
    """(PoB_HTD, PoB_MTD) of one CHE profile."""
    opt = opt or centralized_optimum(network)
    rate, energy = network.totals(getattr(fractions, "fractions", fractions))
    return _ratio(opt.max_htd_rate, rate), _ratio(energy, opt.min_mtd_energy)


def qos_satisfied(network: Network, fractions) -> np.ndarray:
    fr = np.asarray(getattr(fractions, "fractions", fractions), dtype=float)
    return fr >= network.qos_floor * (1 - QOS_RTOL)


def qos_satisfaction(network: Network, fractions) -> float:
    """Percentage of devices whose fraction reaches their QoS floor."""
    if len(network) == 0:
        return 100.0
    return 100.0 * float(qos_satisfied(network, fractions).mean())


def equal_time_policy(network: Network) -> np.ndarray:
    """Fractions 1/L for every device."""
    L = len(network)
    if L < 1:
        raise ValueError("equal-time policy needs at least one device")
    return np.full(L, 1.0 / L)


def ch_packet_size(C: int, N_H: int, N_M: int, p: OverheadParams = OverheadParams()) -> int:
    """Bytes of the base-station broadcast that lets devices compute the CHE."""
    if min(C, N_H, N_M) < 0:
        raise ValueError("counts must be nonnegative")
    bits = p.per_bin * C + p.B_H * N_H + p.B_M * N_M
    return -(-bits // 8)


def gne_signaling_bits(L: int, p: OverheadParams = OverheadParams()) -> int:
    if L < 0:
        raise ValueError("L must be nonnegative")
    return p.rounds * p.bits_per_fraction * L
