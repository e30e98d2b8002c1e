"""A realized device population: per-device parameter arrays plus derived thresholds."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from hetalloc import model
from hetalloc.model import DeviceType, Kind, RadioConstants


@dataclass(frozen=True, eq=False)
class Network:
    radio: RadioConstants
    types: tuple  # DeviceType per type id
    type_id: np.ndarray
    alpha2: np.ndarray

    @classmethod
    def from_counts(cls, radio: RadioConstants, types: Sequence[DeviceType],
                    counts: Sequence[int], alpha2=None) -> "Network":
        """Devices ordered by type: counts[0] of types[0], then counts[1] of types[1], ..."""
        if len(types) != len(counts):
            raise ValueError("types and counts differ in length")
        type_id = np.repeat(np.arange(len(types)), np.asarray(counts, dtype=int))
        if alpha2 is None:
            alpha2 = np.array([types[k].alpha2 for k in type_id], dtype=float)
        alpha2 = np.asarray(alpha2, dtype=float)
        if alpha2.shape != type_id.shape:
            raise ValueError("alpha2 must give one variance per device")
        for t in types:
            if t.kind is Kind.MTD and t.deadline / radio.period < 1:
                raise model.DomainError(f"{t.name or 'MTD'}: deadline shorter than one period")
        return cls(radio, tuple(types), type_id, alpha2)

    @classmethod
    def from_devices(cls, radio: RadioConstants, devices: Sequence[DeviceType]) -> "Network":
        """One type per device, in the given order."""
        return cls.from_counts(radio, devices, [1] * len(devices))

    def with_alpha2(self, alpha2) -> "Network":
        return Network(self.radio, self.types, self.type_id, np.asarray(alpha2, dtype=float))

    def __len__(self) -> int:
        return int(self.type_id.size)

    @property
    def size(self) -> int:
        return len(self)

    def device(self, i: int) -> DeviceType:
        """DeviceType of device i with its own channel variance."""
        t = self.types[self.type_id[i]]
        if t.alpha2 == self.alpha2[i]:
            return t
        from dataclasses import replace
        return replace(t, alpha2=float(self.alpha2[i]))

    def _per_type(self, attr, default=np.nan):
        vals = np.array([default if getattr(t, attr) is None else getattr(t, attr)
                         for t in self.types], dtype=float)
        return vals[self.type_id] if self.types else np.zeros(0)

    @cached_property
    def is_htd(self) -> np.ndarray:
        kinds = np.array([t.kind is Kind.HTD for t in self.types], dtype=bool)
        return kinds[self.type_id] if self.types else np.zeros(0, dtype=bool)

    @property
    def is_mtd(self) -> np.ndarray:
        return ~self.is_htd

    @cached_property
    def power(self) -> np.ndarray:
        return self._per_type("power")

    @cached_property
    def bits(self) -> np.ndarray:
        return self._per_type("packet_bits")

    @cached_property
    def budget(self) -> np.ndarray:
        return self._per_type("energy_budget")

    @cached_property
    def slots(self) -> np.ndarray:
        return self._per_type("deadline") / self.radio.period

    @cached_property
    def snr(self) -> np.ndarray:
        return self.alpha2 * self.power / self.radio.noise

    @cached_property
    def rate_coef(self) -> np.ndarray:
        out = np.empty(len(self))
        cache = {}
        for i, s in enumerate(self.snr):
            if s not in cache:
                cache[s] = model.rate_coefficient(float(s), self.radio.bandwidth)
            out[i] = cache[s]
        return out

    @cached_property
    def gamma_ub(self) -> np.ndarray:
        out = np.full(len(self), np.nan)
        m = self.is_mtd
        if m.any():
            out[m] = model.upper_bound_for(self.snr[m], self.slots[m], self.radio.epsilon)
        return out

    @cached_property
    def gamma_prime(self) -> np.ndarray:
        out = np.full(len(self), np.nan)
        m = self.is_mtd
        if m.any():
            snr = self.snr[m]
            uniq, inv = np.unique(snr, return_inverse=True)
            hint = np.array([self.gamma_ub[m][inv == k].min() for k in range(uniq.size)])
            out[m] = model.solve_interior_optimum(uniq, hint=hint)[inv]
        return out

    @cached_property
    def htd_cap(self) -> np.ndarray:
        """E / (T P) for HTDs, clipped to 1; nan for MTDs."""
        return np.minimum(self.budget / (self.radio.period * self.power), 1.0)

    @cached_property
    def tau_ub(self) -> np.ndarray:
        """Smallest deadline-meeting fraction (MTD) / 0 (HTD)."""
        out = np.zeros(len(self))
        m = self.is_mtd
        out[m] = model.fraction_for(self.bits[m], self.gamma_ub[m], self.radio)
        return out

    @cached_property
    def best_gamma(self) -> np.ndarray:
        """Utility-maximising MTD threshold min(gamma', gamma_UB); nan for HTDs."""
        return np.fmin(self.gamma_prime, self.gamma_ub)

    @cached_property
    def pref(self) -> np.ndarray:
        """Fraction each device claims when unconstrained by others."""
        out = np.array(self.htd_cap, copy=True)
        m = self.is_mtd
        out[m] = model.fraction_for(self.bits[m], self.best_gamma[m], self.radio)
        return out

    @cached_property
    def qos_floor(self) -> np.ndarray:
        """Fraction at or above which a device's QoS is met."""
        out = np.array(self.tau_ub, copy=True)
        h = self.is_htd
        floor = self._per_type("qos_min_fraction")[h]
        out[h] = np.where(np.isnan(floor), self.htd_cap[h], floor)
        return out

    @cached_property
    def in_m_prime(self) -> np.ndarray:
        """MTDs whose interior optimum respects the deadline bound."""
        return self.is_mtd & (self.gamma_prime <= self.gamma_ub)

    # --- conversions between actions and fractions ---

    def fractions_from_actions(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=float)
        out = np.array(actions, copy=True)
        m = self.is_mtd
        out[m] = model.fraction_for(self.bits[m], actions[m], self.radio)
        return out

    def actions_from_fractions(self, fractions: np.ndarray) -> np.ndarray:
        fractions = np.asarray(fractions, dtype=float)
        out = np.array(fractions, copy=True)
        m = self.is_mtd
        out[m] = model.threshold_for(self.bits[m], fractions[m], self.radio)
        return out

    # --- utilities ---

    def mtd_energy(self, fractions: np.ndarray) -> np.ndarray:
        """Expected energy of every MTD at the given fractions (HTD entries 0)."""
        fractions = np.asarray(fractions, dtype=float)
        m = self.is_mtd
        out = np.zeros(len(self))
        g = model.threshold_for(self.bits[m], fractions[m], self.radio)
        out[m] = model.energy_for(self.power[m], self.bits[m], g, self.snr[m], self.radio)
        return out

    def htd_rate(self, fractions: np.ndarray) -> np.ndarray:
        fractions = np.asarray(fractions, dtype=float)
        return np.where(self.is_htd, self.rate_coef * fractions, 0.0)

    def utilities(self, fractions: np.ndarray) -> np.ndarray:
        """Per-device utility: rate for HTDs, negated energy for MTDs."""
        return self.htd_rate(fractions) - self.mtd_energy(fractions)

    def totals(self, fractions: np.ndarray) -> tuple:
        """(total HTD rate in bit/s, total MTD energy in J)."""
        return float(self.htd_rate(fractions).sum()), float(self.mtd_energy(fractions).sum())
