"""Acceptance checks, one per criterion, each also reported as a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v` (the lines appear in the terminal
summary) or `python3 tests/test_acceptance.py`.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from hetalloc import gne, hierarchy as ch, metrics, model
from hetalloc.model import ContractViolation, DeviceType, Kind, RadioConstants
from hetalloc.network import Network
from hetalloc.scenario import load_bundled
from hetalloc.sweep import SweepSpec, run_sweep

ACCEPTANCE_RESULTS = {}  # key -> (passed, detail)

REF = RadioConstants(1e8, 3e-3, model.dbm_to_watts(-90.8), 1e-4)
UNIT = RadioConstants(1.0, 1.0, 1.0 / math.e, 0.5)


def report(key, passed, detail):
    ACCEPTANCE_RESULTS[key] = (bool(passed), detail)
    print(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)


def random_types(rng):
    types = []
    for k in range(int(rng.integers(1, 4))):
        if rng.random() < 0.5:
            types.append(DeviceType(Kind.HTD, rng.uniform(0.05, 1.0), rng.uniform(0.01, 1.0),
                                    energy_budget=rng.uniform(1e-6, 5e-4) * 0.5, name=f"h{k}"))
        else:
            types.append(DeviceType(Kind.MTD, rng.uniform(0.01, 0.5), rng.uniform(0.01, 1.0),
                                    packet_bits=float(rng.integers(50, 4000)),
                                    deadline=rng.uniform(3e-3, 1.0), name=f"m{k}"))
    return types


def random_feasible_network(rng, max_l=200):
    while True:
        types = random_types(rng)
        L = int(rng.integers(1, max_l + 1))
        counts = rng.multinomial(L, np.ones(len(types)) / len(types))
        net = Network.from_counts(REF, types, counts)
        net = net.with_alpha2(net.alpha2 * rng.uniform(0.5, 1.5, len(net)))
        if net.tau_ub.sum() <= 1:
            return net


# --- 1: formula oracles ------------------------------------------------------


def test_criterion_1_formula_oracles():
    t0 = time.perf_counter()
    g = float(model.solve_interior_optimum(math.e))
    err_prime = abs(g - (math.e - 1))

    mtd = DeviceType(Kind.MTD, 0.1, 0.1, packet_bits=1024, deadline=5e-3)
    g_ub = model.gamma_upper_bound(mtd, REF)
    p = model.success_probability(mtd, REF, g_ub)
    viol = model.deadline_violation(p, mtd.slots(REF))
    err_deadline = abs(viol - REF.epsilon) / REF.epsilon

    rng = np.random.default_rng(20171016)
    rho = 3.0
    draws = np.log2(1.0 + rho * rng.exponential(1.0, 10**7))
    se = draws.std() / math.sqrt(draws.size)
    z = abs(model.rate_coefficient(rho, 1.0) - draws.mean()) / se
    dt = time.perf_counter() - t0

    ok = err_prime <= 1e-9 and err_deadline <= 1e-10 and z <= 3 and dt < 10
    report(1, ok, f"gamma' err={err_prime:.2e}, deadline rel err={err_deadline:.2e}, "
                  f"MC |z|={z:.2f}, {dt:.1f}s")
    assert ok


# --- 2: convergence in at most three sweeps ---------------------------------


def test_criterion_2_convergence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst, failures, runs = 0, 0, 1000
    for _ in range(runs):
        net = random_feasible_network(rng)
        try:
            _, diag = gne.gauss_seidel_learn(net, gne.initial_feasible_profile(net, rng))
            worst = max(worst, diag.outer_iterations)
        except ContractViolation:
            failures += 1
    dt = time.perf_counter() - t0
    ok = failures == 0 and worst <= 3 and dt < 60
    report(2, ok, f"{runs} scenarios, max sweeps={worst}, non-converged={failures}, {dt:.1f}s")
    assert ok


# --- 3: uniqueness consistency ----------------------------------------------


def _action_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def test_criterion_3_uniqueness_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    n_unique = n_multi = 0
    worst_err, bad_members = 0.0, 0
    while n_unique < 30 or n_multi < 30:
        net = random_feasible_network(rng)
        unique = gne.uniqueness_condition(net)[0]
        if (unique and n_unique >= 30) or (not unique and n_multi >= 30):
            continue
        ref = gne.unique_gne(net).actions if unique else None
        for _ in range(100):
            prof, _ = gne.gauss_seidel_learn(net, gne.initial_feasible_profile(net, rng))
            if unique:
                worst_err = max(worst_err, _action_err(prof.actions, ref))
            elif not gne.verify_gne_membership(net, prof):
                bad_members += 1
        n_unique += unique
        n_multi += not unique
    dt = time.perf_counter() - t0
    ok = worst_err <= 1e-9 and bad_members == 0 and dt < 120
    report(3, ok, f"{n_unique} unique x100 starts: max action err={worst_err:.1e}; "
                  f"{n_multi} non-unique x100 starts: membership failures={bad_members}; {dt:.1f}s")
    assert ok


# --- 4: brute force on small games ------------------------------------------

N_GRID = 10001  # points per axis, grid step 1e-4


def _grid_best(net, i, grid):
    """best[j]: index of the utility-maximizing feasible grid fraction not above grid[j], -1 if none."""
    u = gne._utility_of(net, i, np.maximum(grid, 1e-300))
    feasible = grid >= net.tau_ub[i] if net.is_mtd[i] else np.ones(grid.size, bool)
    if net.is_htd[i]:
        feasible &= grid <= net.htd_cap[i] + 1e-12
    u = np.where(feasible, u, -np.inf)
    best = np.empty(grid.size, dtype=np.int64)
    run, arg = -np.inf, -1
    for j in range(grid.size):
        if u[j] > run:
            run, arg = u[j], j
        best[j] = arg
    return best


def _grid_equilibria_distance(net, targets):
    """Exhaustive grid search for mutual best responses.

    Returns (number of grid equilibria, per-target max-norm distance to the
    nearest grid equilibrium, largest distance from any grid equilibrium to the
    nearest target).
    """
    n = N_GRID - 1
    grid = np.arange(N_GRID) / n
    best = [_grid_best(net, i, grid) for i in range(len(net))]
    targets = np.asarray(targets)
    near = np.full(len(targets), np.inf)
    far = 0.0
    count = 0
    idx = np.arange(N_GRID)
    if len(net) == 2:
        # device 1 answers every j0; keep pairs where device 0 answers back with j0
        j1 = best[1][n - idx]
        ok = j1 >= 0
        j0 = idx[ok]
        j1 = j1[ok]
        back = best[0][n - j1]
        eq = np.column_stack([j0, j1])[back == j0] / n
        count = len(eq)
        if count:
            d = np.max(np.abs(eq[:, None, :] - targets[None, :, :]), axis=2)
            near = d.min(axis=0)
            far = float(d.min(axis=1).max())
        return count, near, far
    for j0 in range(N_GRID):
        j1 = idx[: n - j0 + 1]
        j2 = best[2][n - j0 - j1]
        ok = j2 >= 0
        j1, j2 = j1[ok], j2[ok]
        ok = (best[1][n - j0 - j2] == j1) & (best[0][np.maximum(n - j1 - j2, 0)] == j0) & (j1 + j2 <= n)
        if not ok.any():
            continue
        eq = np.column_stack([np.full(ok.sum(), j0), j1[ok], j2[ok]]) / n
        count += len(eq)
        d = np.max(np.abs(eq[:, None, :] - targets[None, :, :]), axis=2)
        near = np.minimum(near, d.min(axis=0))
        far = max(far, float(d.min(axis=1).max()))
    return count, near, far


def _small_games():
    h = lambda E, a=1.0: DeviceType(Kind.HTD, 1.0, a, energy_budget=E)
    m = lambda b, a=1.0: DeviceType(Kind.MTD, 1.0, a, packet_bits=b, deadline=1.0)
    return {
        "htd+mtd slack": [h(0.3), m(0.5)],
        "htd+mtd tight": [h(0.8), m(0.5)],
        "mtd+mtd tight": [m(0.9), m(0.7, 2.0)],
        "htd+htd tight": [h(0.7), h(0.6, 0.5)],
        "3 slack": [h(0.2), m(0.3), m(0.2, 3.0)],
        "3 tight": [h(0.5), m(0.5), h(0.4, 2.0)],
    }


@pytest.mark.slow
def test_criterion_4_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    cell = 1.0 / (N_GRID - 1)
    lines, ok = [], True
    for name, devs in _small_games().items():
        net = Network.from_devices(UNIT, devs)
        sols = np.array([gne.gauss_seidel_learn(net, gne.initial_feasible_profile(net, rng))[0].fractions
                         for _ in range(20)])
        unique = gne.uniqueness_condition(net)[0]
        count, near, far = _grid_equilibria_distance(net, sols)
        # every solver equilibrium sits next to a grid equilibrium; with a unique
        # equilibrium every grid equilibrium also sits next to it
        good = count > 0 and near.max() <= cell * (1 + 1e-9) and (not unique or far <= cell * (1 + 1e-9))
        ok &= good
        lines.append(f"{name}: {count} grid eq, max gap {near.max() / cell:.2f} cells")
    dt = time.perf_counter() - t0
    ok = ok and dt < 300
    report(4, ok, "; ".join(lines) + f"; {dt:.1f}s")
    assert ok


# --- 5: closed-form overhead numbers ------------------------------------------


def test_criterion_5_overhead_numbers():
    a = metrics.ch_packet_size(5, 1, 2)
    b = metrics.gne_signaling_bits(1000)
    ok = a == 15 and b == 30000
    report(5, ok, f"packet={a} bytes, signaling={b} bits")
    assert ok


# --- 6: trends of the bundled sweep ------------------------------------------


@pytest.fixture(scope="module")
def bundled_sweep():
    sc = load_bundled()
    spec = SweepSpec.from_scenario(sc)
    t0 = time.perf_counter()
    rows = run_sweep(spec, sc, workers=os.cpu_count() or 1)
    dt = time.perf_counter() - t0
    return spec, rows, dt


def _mean(rows, solver, mu, col):
    return {r.size: getattr(r, col) for r in rows
            if r.solver == solver and r.mu_multiplier == mu and r.sample_stat == "mean"}


def _last_below_one(sums):
    """Largest size whose mean raw CHE sum is still below 1, with every larger size at or above 1."""
    sizes = sorted(sums)
    above = [L for L in sizes if sums[L] >= 1]
    if not above:
        return None
    first = above[0]
    if any(sums[L] < 1 for L in sizes if L > first):
        return None
    below = [L for L in sizes if L < first]
    return below[-1] if below else 0


def _nondecreasing(vals, rtol=1e-9):
    return all(b >= a * (1 - rtol) for a, b in zip(vals, vals[1:]))


def _trend_parts(spec, rows):
    mu2, mu3 = spec.mu_multipliers[0], spec.mu_multipliers[-1]
    sizes = sorted(spec.sizes)
    parts = {}

    g = [r for r in rows if r.solver == "gne"]
    worst = max(max(abs(r.poa_htd - 1), abs(r.poa_mtd - 1)) for r in g)
    parts["a"] = (worst <= 1e-9 and len(g) == 3 * len(sizes) * len(spec.mu_multipliers),
                  f"max |PoA-1|={worst:.1e}")

    x2 = _last_below_one(_mean(rows, "che", mu2, "raw_che_sum"))
    x3 = _last_below_one(_mean(rows, "che", mu3, "raw_che_sum"))
    ok_b = x2 is not None and 8000 <= x2 < 10000 and x3 is not None and x3 <= x2
    parts["b"] = (ok_b, f"raw sum crosses 1 after {x2} (mu={mu2:g}) and after {x3} (mu={mu3:g})")

    che_q = min(min(_mean(rows, "che", mu, "qos_pct").values()) for mu in (mu2, mu3))
    eq_q = _mean(rows, "equal", mu2, "qos_pct")
    beyond = [eq_q[L] for L in sizes if x2 is not None and L > x2]
    ok_c = che_q >= 96 and bool(beyond) and max(beyond) < 80
    parts["c"] = (ok_c, f"min CHE QoS={che_q:.1f}%, equal-time QoS past crossing="
                        f"{[round(v, 1) for v in beyond]}")

    ce, ee = _mean(rows, "che", mu2, "total_mtd_energy_j"), _mean(rows, "equal", mu2, "total_mtd_energy_j")
    ratio = [ce[L] / ee[L] for L in sizes]
    parts["d"] = (max(ratio) <= 0.25, f"CHE/equal energy {min(ratio):.3g}..{max(ratio):.3g}")

    gains = []
    for mu in (mu2, mu3):
        cr, er = _mean(rows, "che", mu, "total_htd_rate_bps"), _mean(rows, "equal", mu, "total_htd_rate_bps")
        gains += [cr[L] / er[L] for L in sizes if L <= 8000]
    parts["e"] = (min(gains) >= 1.8, f"CHE/equal rate up to 8000: {min(gains):.3g}..{max(gains):.3g}")

    ok_f, notes = True, []
    for mu, x in ((mu2, x2), (mu3, x3)):
        ph = _mean(rows, "che", mu, "pob_htd")
        pm = _mean(rows, "che", mu, "pob_mtd")
        before = [ph[L] for L in sizes if x is not None and L <= x]
        after = [ph[L] for L in sizes if x is not None and L >= x]
        m_vals = [pm[L] for L in sizes]
        ok_f &= x is not None and all(abs(v - 1) <= 1e-9 for v in before) and _nondecreasing(after)
        ok_f &= all(1.5 <= v <= 4 for v in m_vals) and _nondecreasing(m_vals)
        notes.append(f"mu={mu:g}: PoB_HTD {min(ph.values()):.3g}..{max(ph.values()):.3g}, "
                     f"PoB_MTD {min(m_vals):.3g}..{max(m_vals):.3g}")
    pm2, pm3 = _mean(rows, "che", mu2, "pob_mtd"), _mean(rows, "che", mu3, "pob_mtd")
    ok_f &= all(pm3[L] >= pm2[L] * (1 - 1e-9) for L in sizes)
    parts["f"] = (ok_f, "; ".join(notes))
    return parts


@pytest.mark.slow
@pytest.mark.parametrize("part", list("abcdef"))
def test_criterion_6_trend(bundled_sweep, part):
    spec, rows, dt = bundled_sweep
    parts = _trend_parts(spec, rows)
    ok, detail = parts[part]
    report(f"6{part}", ok, detail)
    if part == "f":
        overall = all(p[0] for p in parts.values()) and dt < 600
        failed = "".join(k for k, p in parts.items() if not p[0])
        report(6, overall, f"sweep {len(spec.sizes)} sizes x {len(spec.mu_multipliers)} mu x "
                           f"{spec.samples} samples in {dt:.1f}s; failing parts: {failed or 'none'}")
    assert ok


# --- 7: CHE versus GNE verdicts ----------------------------------------------


def random_che_case(rng):
    # noise spans low to high SNR; a skewed type mix lets the HTD level overshoot its belief
    rc = RadioConstants(1e8, 3e-3, 10 ** rng.uniform(-12, -2), 1e-4)
    m0 = DeviceType(Kind.MTD, rng.uniform(0.05, 0.5), rng.uniform(0.02, 0.5),
                    packet_bits=float(rng.integers(200, 2000)), deadline=rng.uniform(3e-3, 1.0), name="m0")
    m1 = DeviceType(Kind.MTD, rng.uniform(0.05, 0.5), rng.uniform(0.02, 0.5),
                    packet_bits=float(rng.integers(50, 1000)), deadline=rng.uniform(0.05, 1.0), name="m1")
    h = DeviceType(Kind.HTD, rng.uniform(0.1, 1.0), rng.uniform(0.02, 0.5),
                   energy_budget=rng.uniform(1e-8, 1e-5), name="h")
    lv = ch.LevelModel(1.0, 2, 1, {"m0": 0, "m1": 1, "h": 2})
    while True:
        counts = rng.multinomial(int(rng.integers(3, 3000)), rng.dirichlet([1, 1, 1]))
        net = Network.from_counts(rc, [m0, m1, h], counts)
        net = net.with_alpha2(net.alpha2 * rng.uniform(0.5, 1.5, len(net)))
        if counts[0] > 0 and net.tau_ub.sum() <= 1:
            return net, lv, float(rng.uniform(1.2, 4.0))


def test_criterion_7_che_verdict():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    tally = {"gne": 0, "not": 0}
    problems = []
    for case in range(500):
        net, lv, mu = random_che_case(rng)
        sol = ch.normalize(ch.che_solve(net, lv, ch.quantize_channels(net.alpha2, 5), mu, rng), net)
        v = ch.che_is_gne(net, sol)
        fr = sol.normalized
        if v.is_gne:
            tally["gne"] += 1
            if not gne.is_gne(net, fr, rng=np.random.default_rng(case)):
                problems.append(f"case {case}: verdict GNE but a deviation pays")
            continue
        tally["not"] += 1
        if not v.witness.gain > 0:
            problems.append(f"case {case}: witness gain {v.witness.gain:g}")
        start = gne.StrategyProfile.from_fractions(net, fr)
        best, _ = gne.gauss_seidel_learn(net, start, require_deadline=False)
        u_che = net.utilities(fr)
        u_gne = net.utilities(best.fractions)
        # totals mix bit/s and joules, so allow rounding on the scale of the largest term
        if u_gne.sum() < u_che.sum() - 1e-12 * np.abs(u_che).sum():
            problems.append(f"case {case}: CHE total utility above the GNE's")
    dt = time.perf_counter() - t0
    ok = not problems and dt < 180
    report(7, ok, f"500 scenarios ({tally['gne']} GNE, {tally['not']} not): "
                  f"{len(problems)} problems; {dt:.1f}s" + (f"; first: {problems[0]}" if problems else ""))
    assert ok


# --- 8: operation count scaling ---------------------------------------------


def test_criterion_8_operation_scaling():
    types = [DeviceType(Kind.MTD, 0.1, 0.1, packet_bits=100, deadline=1.0, name=f"m{k}") for k in range(6)]
    types.append(DeviceType(Kind.HTD, 0.5, 0.1, energy_budget=1e-8, name="h"))
    lv = ch.LevelModel(1.0, 6, 5, {t.name: k for k, t in enumerate(types)})
    xs, ys = [], []
    for C in (2, 5, 10):
        net = Network.from_counts(REF, types, [50] * 7)
        net = net.with_alpha2(np.linspace(0.02, 0.4, len(net)))
        q = ch.quantize_channels(net.alpha2, C)
        assert q.C == C
        ops = ch.solve_levels(net, lv, q, 2.0).operations
        for k in range(7):
            xs.append((k + 1) * C)
            ys.append(ops[k])
    x, y = np.array(xs, float), np.array(ys, float)
    a = float(x @ y / (x @ x))
    r2 = 1 - float(((y - a * x) ** 2).sum() / ((y - y.mean()) ** 2).sum())
    ok = r2 > 0.99
    report(8, ok, f"ops = {a:.3g}*(k+1)*C, R^2={r2:.6f}")
    assert ok


# --- 9: determinism ----------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    args = [sys.executable, "-m", "hetalloc.cli", "--sizes", "1000,9000", "--samples", "25", "--seed", "99"]
    outs = []
    for name, extra in (("a", []), ("b", []), ("c", ["--workers", "2"])):
        p = tmp_path / f"{name}.csv"
        r = subprocess.run(args + extra + ["--out", str(p)], capture_output=True)
        assert r.returncode == 0, r.stderr
        outs.append(p.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    report(9, ok, f"3 runs, {len(outs[0])} bytes each, identical={ok}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
