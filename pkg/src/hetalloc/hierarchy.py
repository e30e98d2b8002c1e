"""Cognitive-hierarchy equilibrium (CHE) of the time-allocation game.

Devices sit on rationality levels 0..K. Level-0 devices (the simplest MTDs)
draw a random time fraction. A level-k device believes the population is
spread over levels 0..k according to a truncated Poisson law and best-responds
to the actions it predicts for the lower levels. Channel variances are
quantized to C bins so that a level-k solve costs (k+1)*C evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from hetalloc import model
from hetalloc.model import ContractViolation, DeviceType, Kind, RadioConstants
from hetalloc.network import Network


@dataclass(frozen=True)
class LevelModel:
    rate: float  # Poisson rate of the level distribution
    max_level: int
    mtd_top_level: int  # levels 0..l hold MTD types, higher levels hold HTD types
    level_of_type: Mapping[str, int]

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Poisson rate must be > 0")
        if not 0 <= self.mtd_top_level < self.max_level:
            raise ValueError("need 0 <= mtd_top_level < max_level")
        levels = sorted(self.level_of_type.values())
        if levels != list(range(self.max_level + 1)):
            raise ValueError("exactly one device type per level 0..max_level")

    def validate(self, types) -> None:
        names = {t.name for t in types}
        if set(self.level_of_type) != names:
            raise ValueError(f"level map names {sorted(self.level_of_type)} != types {sorted(names)}")
        for t in types:
            k = self.level_of_type[t.name]
            if (k <= self.mtd_top_level) != (t.kind is Kind.MTD):
                raise ValueError(f"type {t.name} ({t.kind.value}) cannot sit on level {k}")

    def type_at(self, types, level: int) -> DeviceType:
        for t in types:
            if self.level_of_type[t.name] == level:
                return t
        raise KeyError(level)

    def levels_of(self, network: Network) -> np.ndarray:
        per_type = np.array([self.level_of_type[t.name] for t in network.types], dtype=int)
        return per_type[network.type_id]

    @property
    def pmf(self) -> np.ndarray:
        return level_distribution(self.rate, self.max_level)


@dataclass(frozen=True)
class BeliefDistribution:
    level: int
    g: np.ndarray  # g[h] for h = 0..K; zero above `level`


@dataclass(frozen=True)
class QuantizedChannels:
    centers: np.ndarray  # ascending representative variances, occupied bins only
    counts: np.ndarray  # N_q
    assignment: np.ndarray  # bin index of every device

    @property
    def C(self) -> int:
        return int(self.centers.size)

    @property
    def bins(self):
        return list(zip(self.centers.tolist(), self.counts.tolist()))


@dataclass(frozen=True)
class LevelSolution:
    """Per-(level, bin) CHE actions; everything except the level-0 draws."""
    levels: LevelModel
    quant: QuantizedChannels
    mu_multiplier: float
    actions: np.ndarray  # (K+1, C): gamma for MTD levels, tau for HTD levels; nan on level 0
    fractions: np.ndarray  # (K+1, C) time fraction implied by each action
    tau0_lb: np.ndarray  # (C,) level-0 lower bound per bin
    level0_mean: np.ndarray  # (C,) analytic mean of level-0 draws per bin
    residual: np.ndarray  # (K+1,) believed per-device residual r_k (nan at level 0)
    case: np.ndarray  # (K+1, C) 1/2/3 for MTD cases, 0 for HTD/level 0
    belief_infeasible: np.ndarray  # (K+1, C) bool
    operations: np.ndarray  # (K+1,) evaluations per level solve
    dependencies: tuple  # levels read by each level's solve


@dataclass(frozen=True)
class CheSolution:
    base: LevelSolution
    device_level: np.ndarray
    level0_samples: np.ndarray  # realized fractions of level-0 devices (device order)
    raw_fractions: np.ndarray  # per device
    raw_actions: np.ndarray  # per device: gamma (MTD) or tau (HTD)
    raw_sum: float
    normalized: Optional[np.ndarray] = None  # nu_i
    normalized_actions: Optional[np.ndarray] = None  # gamma_nu for MTDs, nu for HTDs

    @property
    def per_level_per_bin(self) -> dict:
        K1, C = self.base.actions.shape
        return {(h, q): float(self.base.actions[h, q]) for h in range(1, K1) for q in range(C)}

    @property
    def fractions(self) -> np.ndarray:
        """Fractions actually used: normalized when present, raw otherwise."""
        return self.raw_fractions if self.normalized is None else self.normalized

    @property
    def actions(self) -> np.ndarray:
        return self.raw_actions if self.normalized_actions is None else self.normalized_actions


# --- level population and beliefs -----------------------------------------


def level_distribution(rate: float, max_level: int) -> np.ndarray:
    """Poisson pmf f(0..K)."""
    if not rate > 0:
        raise ValueError("rate must be > 0")
    k = np.arange(max_level + 1)
    logf = -rate + k * math.log(rate) - np.array([math.lgamma(i + 1) for i in k])
    return np.exp(logf)


def beliefs(k: int, f) -> BeliefDistribution:
    """Level-k view of the population: f truncated to 0..k (own level included), renormalized."""
    f = np.asarray(f, dtype=float)
    if k < 1:
        raise ValueError("beliefs are defined for levels k >= 1")
    if k >= f.size:
        raise ValueError("level beyond the pmf support")
    g = np.zeros_like(f)
    g[: k + 1] = f[: k + 1] / f[: k + 1].sum()
    return BeliefDistribution(k, g)


# --- level-0 behaviour ------------------------------------------------------


def _check_level0(tau_lb, mu):
    if not 0 < tau_lb < 1:
        raise ValueError(f"tau_0_LB must be in (0, 1), got {tau_lb!r}")
    if not mu > tau_lb:
        raise ValueError(f"mu must exceed tau_0_LB ({mu!r} <= {tau_lb!r})")


def sample_level0(tau_lb: float, mu: float, rng: np.random.Generator, size=None):
    """Shifted exponential on [tau_lb, inf) with untruncated mean mu, redrawn while > 1."""
    _check_level0(tau_lb, mu)
    scale = mu - tau_lb
    n = 1 if size is None else int(np.prod(size))
    out = tau_lb + rng.exponential(scale, n)
    bad = out > 1.0
    while bad.any():
        out[bad] = tau_lb + rng.exponential(scale, int(bad.sum()))
        bad = out > 1.0
    return float(out[0]) if size is None else out.reshape(size)


def level0_mean(tau_lb, mu):
    """Mean of the shifted exponential conditioned on <= 1."""
    tau_lb = np.asarray(tau_lb, dtype=float)
    mu = np.asarray(mu, dtype=float)
    s = mu - tau_lb
    width = 1.0 - tau_lb
    z = width / s
    with np.errstate(over="ignore", invalid="ignore"):
        tail = np.where(z > 700, 0.0, width * np.exp(-z) / -np.expm1(-z))
    return tau_lb + s - tail


def tau0_lower_bound(dev: DeviceType, rc: RadioConstants) -> float:
    """Smallest fraction meeting the deadline constraint (fraction at gamma_UB)."""
    return model.threshold_fraction(dev, rc, model.gamma_upper_bound(dev, rc))


# --- quantization -----------------------------------------------------------


def quantize_channels(variances, C: int = 5) -> QuantizedChannels:
    """Uniform-width bins over [min, max]; each device maps to its bin midpoint."""
    v = np.asarray(variances, dtype=float)
    if v.size == 0:
        raise ValueError("no channel variances to quantize")
    if C < 1:
        raise ValueError("C must be >= 1")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return QuantizedChannels(np.array([lo]), np.array([v.size]), np.zeros(v.size, dtype=int))
    width = (hi - lo) / C
    idx = np.minimum(((v - lo) / width).astype(int), C - 1)
    centers = lo + (np.arange(C) + 0.5) * width
    counts = np.bincount(idx, minlength=C)
    occupied = np.flatnonzero(counts)
    remap = np.full(C, -1)
    remap[occupied] = np.arange(occupied.size)
    return QuantizedChannels(centers[occupied], counts[occupied], remap[idx])


# --- the CHE recursion ------------------------------------------------------


def _bin_params(dev: DeviceType, rc: RadioConstants, centers: np.ndarray):
    snr = centers * dev.power / rc.noise
    t = dev.deadline / rc.period
    g_ub = model.upper_bound_for(snr, t, rc.epsilon)
    g_pr = model.solve_interior_optimum(snr, hint=g_ub)
    return g_pr, g_ub


def solve_levels(network: Network, levels: LevelModel, quant: QuantizedChannels,
                 mu_multiplier: float) -> LevelSolution:
    """Bottom-up per-level, per-bin CHE actions (the deterministic part)."""
    rc = network.radio
    levels.validate(network.types)
    K = levels.max_level
    C = quant.C
    L = len(network)
    f = levels.pmf
    N = quant.counts.astype(float)

    actions = np.full((K + 1, C), np.nan)
    fractions = np.full((K + 1, C), np.nan)
    case = np.zeros((K + 1, C), dtype=int)
    infeasible = np.zeros((K + 1, C), dtype=bool)
    residual = np.full(K + 1, np.nan)
    ops = np.zeros(K + 1, dtype=int)
    deps = []

    t0 = levels.type_at(network.types, 0)
    _, g_ub0 = _bin_params(t0, rc, quant.centers)
    tau0_lb = model.fraction_for(t0.packet_bits, g_ub0, rc)
    mu0 = mu_multiplier * tau0_lb
    if np.any(mu0 <= tau0_lb):
        raise ValueError("mu multiplier must exceed 1")
    mean0 = level0_mean(tau0_lb, mu0)
    fractions[0] = mean0
    ops[0] = C
    deps.append(frozenset({0}))

    for k in range(1, K + 1):
        g = beliefs(k, f).g
        used = 0.0
        read = set()
        for h in range(k):
            # Sum over bins of N_q * tau_q(h), as a level-k device evaluates it
            mass = 0.0
            for q in range(C):
                mass += N[q] * fractions[h, q]
                ops[k] += 1
            used += g[h] * mass
            read.add(h)
        r = (1.0 - used) / (g[k] * L)
        residual[k] = r
        dev = levels.type_at(network.types, k)
        if dev.kind is Kind.MTD:
            g_pr, g_ub = _bin_params(dev, rc, quant.centers)
            g_lb = model.threshold_for(dev.packet_bits, np.full(C, r), rc)
            for q in range(C):
                ops[k] += 1
                if g_pr[q] >= g_ub[q]:
                    case[k, q], a = 1, g_ub[q]
                elif g_lb[q] <= g_pr[q]:
                    case[k, q], a = 2, g_pr[q]
                else:
                    case[k, q], a = 3, g_lb[q]
                if not g_lb[q] <= g_ub[q]:
                    # empty strategy set under the belief: keep the deadline
                    infeasible[k, q] = True
                    a = g_ub[q]
                actions[k, q] = a
            fractions[k] = model.fraction_for(dev.packet_bits, actions[k], rc)
        else:
            cap = min(dev.energy_budget / (rc.period * dev.power), 1.0)
            floor = cap if dev.qos_min_fraction is None else min(dev.qos_min_fraction, cap)
            for q in range(C):
                ops[k] += 1
                if r <= 0:
                    infeasible[k, q] = True
                    actions[k, q] = floor
                else:
                    actions[k, q] = min(cap, r)
            fractions[k] = actions[k]
        read.add(k)
        deps.append(frozenset(read))

    return LevelSolution(levels, quant, mu_multiplier, actions, fractions, tau0_lb, mean0,
                         residual, case, infeasible, ops, tuple(deps))


def realize(base: LevelSolution, network: Network, rng: np.random.Generator) -> CheSolution:
    """Draw level-0 fractions and map the per-level actions onto devices."""
    lev = base.levels.levels_of(network)
    b = base.quant.assignment
    raw_frac = base.fractions[lev, b].copy()
    raw_act = base.actions[lev, b].copy()
    zero = np.flatnonzero(lev == 0)
    samples = np.empty(zero.size)
    for q in np.unique(b[zero]):
        sel = b[zero] == q
        tau_lb = base.tau0_lb[q]
        samples[sel] = sample_level0(tau_lb, base.mu_multiplier * tau_lb, rng, size=int(sel.sum()))
    raw_frac[zero] = samples
    raw_act[zero] = model.threshold_for(network.bits[zero], samples, network.radio)
    return CheSolution(base, lev, samples, raw_frac, raw_act, float(raw_frac.sum()))


def che_solve(network: Network, levels: LevelModel, quant: QuantizedChannels,
              mu_multiplier: float, rng: np.random.Generator) -> CheSolution:
    return realize(solve_levels(network, levels, quant, mu_multiplier), network, rng)


def che_sum(sol: CheSolution, network: Network) -> float:
    """Sum of CHE time fractions recomputed from the realized actions."""
    if len(network) == 0:
        return 0.0
    return float(network.fractions_from_actions(sol.raw_actions).sum())


def normalize(sol: CheSolution, network: Network) -> CheSolution:
    """Scale every fraction by the raw sum when it reaches 1; pass through otherwise."""
    total = sol.raw_sum
    if total == 0:
        raise ValueError("raw CHE sum is zero; nothing to normalize")
    if total < 1.0:
        return replace(sol, normalized=sol.raw_fractions.copy(),
                       normalized_actions=sol.raw_actions.copy())
    nu = sol.raw_fractions / total
    return replace(sol, normalized=nu, normalized_actions=network.actions_from_fractions(nu))


# --- CHE versus GNE ---------------------------------------------------------


@dataclass(frozen=True)
class Deviation:
    device: int
    fraction: float
    action: float
    gain: float  # utility improvement, > 0


@dataclass(frozen=True)
class Verdict:
    is_gne: bool
    branch: str  # "saturated" (raw sum >= 1) or "slack" (raw sum < 1)
    witness: Optional[Deviation] = None


def _deviation(network: Network, fr: np.ndarray, i: int, target: float) -> Deviation:
    new = fr.copy()
    new[i] = target
    gain = float(network.utilities(new)[i] - network.utilities(fr)[i])
    return Deviation(i, float(target), float(network.actions_from_fractions(new)[i]), gain)


def che_is_gne(network: Network, sol: CheSolution, rtol: float = 1e-9) -> Verdict:
    """Decide whether the normalized CHE profile is a GNE; otherwise name a device that gains."""
    if sol.normalized is None:
        raise ContractViolation("che_is_gne needs a normalized solution")
    fr = sol.normalized
    pref = network.pref
    lev = sol.device_level
    if sol.raw_sum >= 1.0:
        # level-0 devices given more time than their optimum would shed it
        over = np.flatnonzero((lev == 0) & (fr > pref * (1 + rtol)))
        if over.size:
            i = int(over[np.argmax(fr[over] / pref[over])])
            return Verdict(False, "saturated", _deviation(network, fr, i, pref[i]))
        return Verdict(True, "saturated")
    slack = 1.0 - fr.sum()
    off = np.abs(fr - pref) > rtol * pref
    if not off.any():
        return Verdict(True, "slack")
    above = np.flatnonzero(off & (fr > pref))
    if above.size:
        i = int(above[0])
        return Verdict(False, "slack", _deviation(network, fr, i, pref[i]))
    i = int(np.flatnonzero(off)[0])
    return Verdict(False, "slack", _deviation(network, fr, i, min(pref[i], fr[i] + slack)))
