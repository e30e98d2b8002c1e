"""Generalized Nash equilibria of the time-allocation game.

Working in time fractions keeps both best responses the same shape: a device
claims min(pref_i, residual_i), where pref_i is the fraction it would take
alone (E/(T P) for an HTD, the fraction at min(gamma', gamma_UB) for an MTD)
and residual_i is what the others leave free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba
import numpy as np

from hetalloc import model
from hetalloc.model import ContractViolation, InfeasibleScenario
from hetalloc.network import Network

ACTION_TOL = 1e-12
SUM_TOL = 1e-9
BITS_PER_MESSAGE = 10
MAX_SWEEPS = 3


@dataclass(frozen=True)
class StrategyProfile:
    actions: np.ndarray  # tau for HTDs, gamma for MTDs
    fractions: np.ndarray

    @classmethod
    def from_fractions(cls, network: Network, fractions) -> "StrategyProfile":
        fr = np.asarray(fractions, dtype=float).copy()
        return cls(network.actions_from_fractions(fr), fr)

    @classmethod
    def from_actions(cls, network: Network, actions) -> "StrategyProfile":
        a = np.asarray(actions, dtype=float).copy()
        return cls(a, network.fractions_from_actions(a))

    def __len__(self):
        return int(self.fractions.size)

    @property
    def total(self) -> float:
        return float(self.fractions.sum())


@dataclass(frozen=True)
class GneDiagnostics:
    outer_iterations: int
    best_response_evaluations: int
    broadcast_messages: int
    bits_exchanged: int
    unique: bool
    saturated_set: frozenset  # devices sitting at their own optimum


@dataclass(frozen=True)
class ClassificationSets:
    m_prime: np.ndarray  # MTDs with gamma' <= gamma_UB
    complement: np.ndarray  # MTDs with gamma' > gamma_UB


class Response(NamedTuple):
    action: float
    fraction: float
    infeasible: bool  # others already use the whole period
    qos_infeasible: bool = False  # MTD cannot meet its deadline in the time left


def _residual(fractions, i) -> float:
    fr = np.asarray(fractions, dtype=float)
    return 1.0 - (float(fr.sum()) - float(fr[i]))


def htd_best_response(network: Network, i: int, fractions) -> Response:
    if not network.is_htd[i]:
        raise ContractViolation(f"device {i} is not an HTD")
    r = _residual(fractions, i)
    if r < 0:
        return Response(0.0, 0.0, True)
    tau = min(float(network.htd_cap[i]), r, 1.0)
    return Response(tau, tau, False)


def mtd_best_response(network: Network, i: int, fractions) -> Response:
    """Three-case rule: gamma_UB, gamma', or the capacity bound gamma_LB.

    When gamma_LB > gamma_UB no threshold meets both constraints; the
    capacity bound wins and the deadline is flagged.
    """
    if not network.is_mtd[i]:
        raise ContractViolation(f"device {i} is not an MTD")
    r = _residual(fractions, i)
    if r <= 0:
        return Response(np.inf, 0.0, True, True)
    rc = network.radio
    g_lb = float(model.threshold_for(network.bits[i], r, rc))
    g_ub = float(network.gamma_ub[i])
    g_pr = float(network.gamma_prime[i])
    if g_lb > g_ub:
        return Response(g_lb, r, False, True)
    gamma = g_ub if g_pr >= g_ub else max(g_pr, g_lb)
    return Response(gamma, float(model.fraction_for(network.bits[i], gamma, rc)), False)


def best_response(network: Network, i: int, fractions) -> Response:
    if network.is_htd[i]:
        return htd_best_response(network, i, fractions)
    return mtd_best_response(network, i, fractions)


def minimum_fractions(network: Network) -> np.ndarray:
    """Deadline fraction for MTDs, 0 for HTDs."""
    return network.tau_ub


def initial_feasible_profile(network: Network, rng: np.random.Generator,
                             weights=None) -> StrategyProfile:
    """Random feasible start: minimum fractions plus a weighted share of the slack, summing to 1."""
    lo = minimum_fractions(network)
    slack = 1.0 - lo.sum()
    if slack < -SUM_TOL:
        raise InfeasibleScenario(f"minimum fractions sum to {lo.sum():.6g} > 1")
    slack = max(slack, 0.0)
    w = rng.random(len(network)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != lo.shape or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative, one per device, not all zero")
    fr = lo + slack * (w / w.sum())
    return StrategyProfile.from_fractions(network, fr)


@numba.njit(cache=True)
def _sweeps(fr, pref, max_sweeps, tol):
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        changed = False
        # fresh sum each sweep so running-sum drift cannot build up
        total = 0.0
        for j in range(fr.size):
            total += fr[j]
        for i in range(fr.size):
            r = 1.0 - (total - fr[i])
            new = min(pref[i], r)
            if new < fr[i] <= pref[i] and fr[i] - new <= tol:
                new = fr[i]  # rounding shortfall, not a real squeeze
            if new < 0.0:
                new = 0.0
            if abs(new - fr[i]) > tol:
                changed = True
            total += new - fr[i]
            fr[i] = new
        if not changed:
            return sweeps, True
    return sweeps, False


def gauss_seidel_learn(network: Network, initial: StrategyProfile,
                       max_sweeps: int = MAX_SWEEPS, require_deadline: bool = True) -> tuple:
    """Sequential best responses in ascending device order until a sweep changes nothing.

    With require_deadline=False the start may leave MTDs below their deadline
    fraction (used to improve on a CHE profile); each device still only moves
    towards its own optimum.
    """
    fr0 = np.asarray(initial.fractions, dtype=float)
    if fr0.shape != (len(network),):
        raise ValueError("initial profile does not match the network")
    if fr0.sum() > 1 + SUM_TOL or np.any(fr0 < 0):
        raise ContractViolation("initial profile is not feasible")
    m = network.is_mtd
    if require_deadline and np.any(fr0[m] < network.tau_ub[m] * (1 - SUM_TOL)):
        raise ContractViolation("initial profile breaks an MTD deadline")
    fr = fr0.copy()
    sweeps, ok = _sweeps(fr, network.pref.astype(float), max_sweeps, ACTION_TOL)
    if not ok:
        raise ContractViolation(f"no convergence within {max_sweeps} sweeps")
    L = len(network)
    at_pref = np.flatnonzero(np.abs(fr - network.pref) <= ACTION_TOL + SUM_TOL * network.pref)
    diag = GneDiagnostics(
        outer_iterations=sweeps,
        best_response_evaluations=sweeps * L,
        broadcast_messages=sweeps * L,
        bits_exchanged=sweeps * L * BITS_PER_MESSAGE,
        unique=uniqueness_condition(network)[0],
        saturated_set=frozenset(at_pref.tolist()),
    )
    return StrategyProfile.from_fractions(network, fr), diag


def classify(network: Network) -> ClassificationSets:
    m = network.is_mtd
    return ClassificationSets(np.flatnonzero(network.in_m_prime),
                              np.flatnonzero(m & ~network.in_m_prime))


def uniqueness_condition(network: Network) -> tuple:
    """(unique?, sets): unique iff every device fits at its own optimum."""
    return bool(network.pref.sum() <= 1.0), classify(network)


def unique_gne(network: Network) -> StrategyProfile:
    if not uniqueness_condition(network)[0]:
        raise ContractViolation("optimal fractions exceed the period; the GNE is not unique")
    return StrategyProfile.from_fractions(network, network.pref)


def verify_gne_membership(network: Network, profile, tol: float = SUM_TOL) -> bool:
    """True iff the profile lies in the GNE set.

    Saturated devices sit at their optimum, the rest sit strictly below it,
    and whenever anyone is below the whole period is in use. MTDs must keep
    their deadline fraction.
    """
    fr = np.asarray(getattr(profile, "fractions", profile), dtype=float)
    if fr.shape != (len(network),) or np.any(~np.isfinite(fr)) or np.any(fr < 0):
        return False
    pref = network.pref
    total = fr.sum()
    if total > 1 + tol:
        return False
    if np.any(fr > pref + tol * np.maximum(pref, 1e-300) + ACTION_TOL):
        return False
    m = network.is_mtd
    if np.any(fr[m] < network.tau_ub[m] * (1 - tol)):
        return False
    below = fr < pref - tol * pref - ACTION_TOL
    if below.any() and abs(total - 1.0) > tol:
        return False
    return True


def feasible_interval(network: Network, fractions, i: int) -> tuple:
    """Range of fractions device i may pick given the others."""
    r = _residual(fractions, i)
    lo = float(network.tau_ub[i]) if network.is_mtd[i] else 0.0
    hi = min(r, 1.0)
    if network.is_htd[i]:
        hi = min(hi, float(network.htd_cap[i]))
    return lo, hi


def _utility_of(network: Network, i: int, tau: np.ndarray) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if network.is_htd[i]:
        return network.rate_coef[i] * tau
    g = model.threshold_for(network.bits[i], tau, network.radio)
    return -model.energy_for(network.power[i], network.bits[i], g, network.snr[i], network.radio)


def deviation_gains(network: Network, fractions, rng: Optional[np.random.Generator] = None,
                    samples: int = 1000, grid: bool = False) -> np.ndarray:
    """Best utility gain each device can get by a unilateral feasible move.

    Alternatives are `samples` uniform draws (or an even grid) over the
    device's feasible interval, plus both interval ends. A GNE has all gains <= 0
    up to rounding.
    """
    fr = np.asarray(fractions, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    out = np.empty(len(network))
    for i in range(len(network)):
        lo, hi = feasible_interval(network, fr, i)
        if hi < lo:
            out[i] = -np.inf
            continue
        u = np.linspace(0.0, 1.0, samples) if grid else rng.random(samples)
        alt = np.concatenate([lo + u * (hi - lo), [lo, hi]])
        base = _utility_of(network, i, fr[i:i + 1])[0]
        out[i] = float(np.max(_utility_of(network, i, alt)) - base)
    return out


def is_gne(network: Network, profile, rng=None, samples: int = 1000, rtol: float = 1e-9) -> bool:
    """Feasibility plus no profitable deviation among sampled alternatives."""
    fr = np.asarray(getattr(profile, "fractions", profile), dtype=float)
    if fr.sum() > 1 + SUM_TOL:
        return False
    gains = deviation_gains(network, fr, rng, samples)
    scale = np.abs(network.utilities(fr)) + 1e-300
    return bool(np.all(gains <= rtol * scale))
