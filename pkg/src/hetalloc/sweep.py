"""Seeded Monte Carlo sweeps over network size and level-0 mean, and report output."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from hetalloc import gne, hierarchy, metrics
from hetalloc.model import ContractViolation, InfeasibleScenario
from hetalloc.scenario import SOLVERS, Scenario

COLUMNS = ("size", "mu_multiplier", "solver", "sample_stat", "total_htd_rate_bps",
           "total_mtd_energy_j", "qos_pct", "raw_che_sum", "poa_htd", "poa_mtd",
           "pob_htd", "pob_mtd", "overhead_bits_or_bytes", "iterations")
HEADER = ",".join(COLUMNS)
STATS = ("min", "mean", "max")
_SOLVER_INDEX = {s: i for i, s in enumerate(SOLVERS)}


@dataclass(frozen=True)
class SweepSpec:
    sizes: tuple
    mu_multipliers: tuple
    samples: int
    seed: int
    solvers: tuple = SOLVERS

    def __post_init__(self):
        if not self.sizes:
            raise ValueError("sizes must be nonempty")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if any(s not in SOLVERS for s in self.solvers):
            raise ValueError(f"solvers must be drawn from {SOLVERS}")
        if not self.mu_multipliers or any(m <= 1 for m in self.mu_multipliers):
            raise ValueError("mu multipliers must exceed 1")

    @classmethod
    def from_scenario(cls, sc: Scenario, **overrides) -> "SweepSpec":
        d = sc.defaults
        base = dict(sizes=d.sizes, mu_multipliers=d.mu, samples=d.samples, seed=d.seed,
                    solvers=d.solvers)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in base.items()})


@dataclass(frozen=True)
class SweepRow:
    size: int
    mu_multiplier: float
    solver: str
    sample_stat: str  # min / mean / max, or "infeasible"
    total_htd_rate_bps: float = math.nan
    total_mtd_energy_j: float = math.nan
    qos_pct: float = math.nan
    raw_che_sum: float = math.nan
    poa_htd: float = math.nan
    poa_mtd: float = math.nan
    pob_htd: float = math.nan
    pob_mtd: float = math.nan
    overhead_bits_or_bytes: float = math.nan
    iterations: float = math.nan

    @property
    def feasible(self) -> bool:
        return self.sample_stat != "infeasible"


def substream(seed: int, size: int, mu_idx: int, solver: str, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(size, mu_idx, _SOLVER_INDEX[solver], rep))
    return np.random.default_rng(ss)


def _stat_rows(size, mu, solver, per_rep: dict, fixed: dict) -> list:
    rows = []
    for stat, fn in zip(STATS, (np.min, np.mean, np.max)):
        vals = {k: float(fn(v)) for k, v in per_rep.items()}
        rows.append(SweepRow(size, mu, solver, stat, **vals, **fixed))
    return rows


def _gne_point(sc: Scenario, net, opt, size, samples, seed):
    rate, energy, qos, its, bits, profiles = [], [], [], [], [], []
    for rep in range(samples):
        rng = substream(seed, size, 0, "gne", rep)
        prof, diag = gne.gauss_seidel_learn(net, gne.initial_feasible_profile(net, rng))
        r, e = net.totals(prof.fractions)
        rate.append(r)
        energy.append(e)
        qos.append(metrics.qos_satisfaction(net, prof.fractions))
        its.append(diag.outer_iterations)
        bits.append(diag.bits_exchanged)
        profiles.append(prof.fractions)
    pa_h, pa_m = metrics.poa(net, profiles, opt)
    return (dict(total_htd_rate_bps=rate, total_mtd_energy_j=energy, qos_pct=qos,
                 overhead_bits_or_bytes=bits, iterations=its),
            dict(poa_htd=pa_h, poa_mtd=pa_m))


def _che_point(sc: Scenario, net, opt, size, mu_idx, mu, samples, seed):
    quant = hierarchy.quantize_channels(net.alpha2, sc.quantization_C)
    base = hierarchy.solve_levels(net, sc.levels, quant, mu)
    rate, energy, qos, raw, pbh, pbm = [], [], [], [], [], []
    for rep in range(samples):
        rng = substream(seed, size, mu_idx, "che", rep)
        sol = hierarchy.normalize(hierarchy.realize(base, net, rng), net)
        fr = sol.fractions
        r, e = net.totals(fr)
        rate.append(r)
        energy.append(e)
        qos.append(metrics.qos_satisfaction(net, fr))
        raw.append(sol.raw_sum)
        h, m = metrics.pob(net, fr, opt)
        pbh.append(h)
        pbm.append(m)
    packet = metrics.ch_packet_size(sc.quantization_C, sc.n_htd_types, sc.n_mtd_types)
    return (dict(total_htd_rate_bps=rate, total_mtd_energy_j=energy, qos_pct=qos,
                 raw_che_sum=raw, pob_htd=pbh, pob_mtd=pbm),
            dict(overhead_bits_or_bytes=float(packet)))


def _equal_point(net):
    fr = metrics.equal_time_policy(net)
    r, e = net.totals(fr)
    return (dict(total_htd_rate_bps=[r], total_mtd_energy_j=[e],
                 qos_pct=[metrics.qos_satisfaction(net, fr)]), {})


def _size_rows(sc: Scenario, spec: SweepSpec, size: int) -> list:
    net = sc.network(size)
    try:
        opt = metrics.centralized_optimum(net)
    except InfeasibleScenario:
        return [SweepRow(size, mu, s, "infeasible") for mu in spec.mu_multipliers for s in spec.solvers]
    shared = {}
    if "gne" in spec.solvers:
        try:
            shared["gne"] = _gne_point(sc, net, opt, size, spec.samples, spec.seed)
        except (InfeasibleScenario, ContractViolation):
            shared["gne"] = None
    if "equal" in spec.solvers:
        shared["equal"] = _equal_point(net)
    rows = []
    for mu_idx, mu in enumerate(spec.mu_multipliers):
        for s in spec.solvers:
            if s == "che":
                try:
                    point = _che_point(sc, net, opt, size, mu_idx, mu, spec.samples, spec.seed)
                except (ValueError, InfeasibleScenario):
                    point = None
            else:
                point = shared[s]
            if point is None:
                rows.append(SweepRow(size, mu, s, "infeasible"))
            else:
                rows.extend(_stat_rows(size, mu, s, *point))
    return rows


def run_sweep(spec: SweepSpec, scenario: Scenario, workers: int = 1) -> list:
    """Rows ordered by size, then mu, then solver (as listed), then min/mean/max."""
    if workers > 1 and len(spec.sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_size_rows, [scenario] * len(spec.sizes),
                                [spec] * len(spec.sizes), spec.sizes))
    else:
        parts = [_size_rows(scenario, spec, L) for L in spec.sizes]
    return [r for part in parts for r in part]


# --- output -----------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


def row_strings(row: SweepRow) -> dict:
    return {c: fmt(getattr(row, c)) for c in COLUMNS}


def to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        s = row_strings(r)
        w.writerow([s[c] for c in COLUMNS])
    return buf.getvalue()


def _json_value(s: str):
    try:
        v = float(s)
    except ValueError:
        return s
    if not math.isfinite(v):
        return s
    return int(s) if s.lstrip("-").isdigit() else v


def to_json(rows: Sequence[SweepRow]) -> str:
    out = [{c: _json_value(v) for c, v in row_strings(r).items()} for r in rows]
    return json.dumps({"columns": list(COLUMNS), "rows": out}, indent=1) + "\n"


def emit_report(rows: Sequence[SweepRow], format: str, path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    if format == "csv":
        text = to_csv(rows)
    elif format == "json":
        text = to_json(rows)
    else:
        raise ValueError(f"unknown format {format!r}")
    if str(path) == "-":
        import sys
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def read_report(path) -> list:
    """Rows as dicts of formatted strings, from either output format."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return [{c: fmt(r[c]) for c in COLUMNS} for r in data["rows"]]
    return list(csv.DictReader(io.StringIO(text)))
