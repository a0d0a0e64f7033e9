"""Acceptance checks at their stated tolerances; each prints one PASS/FAIL line."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import record_verdict
from emdecay.energy import (
    FrequencyGrid,
    energy_identity_residual,
    integrate_rk4,
    search_params,
)
from emdecay.general import (
    constraint_split,
    project_constraints,
    two_two_one_prediction,
    verify_decay_property,
)
from emdecay.grid import GridField, from_function
from emdecay.kernel import (
    DEFAULT_GRIDS,
    EtaProfile,
    NormSpec,
    gaussian,
    high_freq_weight_integral,
    predict,
    verify_lpqlr,
)
from emdecay.solver import (
    GridConfig,
    InitConfig,
    SimulationConfig,
    TimeConfig,
    build_initial_data,
    decay_report,
    gn_check,
    gn_corpus,
    gn_ratios,
    nonlinear_terms,
    simulate,
)
from emdecay.system import (
    build_euler_maxwell,
    check_structure,
    constraint_subspace,
    direction_set,
    fit_margin,
    scan_abscissa,
    xi_grid,
)


def verdict(name, ok, detail):
    record_verdict(name, ok, detail)
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def test_restricted_decay_margin():
    start = time.perf_counter()
    dirs = direction_set(3)
    scan = scan_abscissa(build_euler_maxwell(), xi_grid(1e-2, 1e2, 81), dirs)
    fit = fit_margin(scan)
    elapsed = time.perf_counter() - start
    ok = (len(dirs) >= 14 and fit.c0 > 0 and abs(fit.low_slope - 2) <= 0.15
          and abs(fit.high_slope + 2) <= 0.15 and elapsed < 60)
    verdict("restricted decay margin", ok,
            f"c0={fit.c0:.4f} low={fit.low_slope:.3f} high={fit.high_slope:.3f} "
            f"directions={len(dirs)} time={elapsed:.1f}s")


KERNEL_TUPLES = [
    (2, 1, 2, 0, 0, 2),
    (2, 1, 2, 1, 0, 2),
    (2, 1, 1, 1, 0, 2),
    (2, 1, 1, 0, 0, 2),
    (math.inf, 1, 1, 0, 0, 4),
    (2, 1, 2, 2, 0, 2),
]


def test_kernel_norm_exponents():
    worst_low = worst_high = worst_growth = 0.0
    failures = []
    for n in (1, 2, 3):
        N, L = DEFAULT_GRIDS[n]
        phi = gaussian(n, N, L)
        for tup in KERNEL_TUPLES:
            spec = NormSpec(*tup, n)
            rep = verify_lpqlr(phi, spec)
            pred = predict(spec)
            dl = abs(rep.low_fit.slope - float(pred.low_exp))
            dh = abs(rep.high_fit.slope - float(pred.high_exp))
            growth = rep.c_star_growth()
            worst_low, worst_high = max(worst_low, dl), max(worst_high, dh)
            worst_growth = max(worst_growth, growth)
            if dl > 0.05 or dh > 0.1 or not growth < 2:
                failures.append((n, tup))
    verdict("kernel norm exponents", not failures,
            f"18 cases, max low error={worst_low:.3f} max high error={worst_high:.3f} "
            f"max C* growth={worst_growth:.3f} failures={failures}")


def test_weight_integral_exponent():
    t = np.geomspace(10, 1e4, 24)
    errors = []
    for l, s2, n in [(2, 2, 3), (4, 1, 3), (3, 1, 1)]:
        w = high_freq_weight_integral(EtaProfile(1, 2), l, s2, 1.0, t, n=n, window=(1e2, 1e4))
        errors.append(abs(w.fit.slope - float(w.predicted)))
    verdict("high-frequency weight integral", max(errors) <= 0.05,
            "exponent errors " + ", ".join(f"{e:.4f}" for e in errors))


def test_energy_method():
    grid = FrequencyGrid.default()
    res = search_params(xis=grid.xis)
    lp, val = res.params, res.validation
    lo, hi = val["equivalence_range"]
    rng = np.random.default_rng(2024)
    sysm = build_euler_maxwell()
    worst = 0.0
    for _ in range(100):
        d = rng.normal(size=3)
        xi = d / np.linalg.norm(d) * 10 ** rng.uniform(-2, 1.5)
        V = constraint_subspace(sysm, xi).basis
        z0 = V @ (rng.normal(size=V.shape[1]) + 1j * rng.normal(size=V.shape[1]))
        traj = integrate_rk4(xi, z0 / np.linalg.norm(z0), 2.0)
        worst = max(worst, float(energy_identity_residual(traj).max()))
    ok = (lp.c1 > 0 and 0.5 <= lo and hi <= 2 and val["passed"]
          and val["trajectory_monotone_violation"] <= 1e-8 and worst <= 1e-8)
    verdict("frequency-wise energy method", ok,
            f"alpha1={lp.alpha1:.4f} alpha2={lp.alpha2:.4f} c1={lp.c1:.4f} "
            f"equivalence=[{lo:.3f}, {hi:.3f}] monotone violation={val['trajectory_monotone_violation']:.1e} "
            f"identity residual={worst:.1e}")


@pytest.mark.slow
def test_small_data_decay():
    grid = GridConfig(64, 32 * math.pi, 3)
    init = InitConfig(normalize="l1", epsilon=1e-3)
    horizon = TimeConfig(T=40.0)
    window = (5.0, 40.0)
    linear = simulate(SimulationConfig(grid=grid, init=init, time=horizon, nonlinear=False))
    lin = decay_report(linear.monitors, window)
    full = simulate(SimulationConfig(grid=grid, init=init, time=horizon, nonlinear=True))
    non = decay_report(full.monitors, window)
    mon = full.monitors
    i1 = mon.times.index(1.0)
    n_ratio = mon.N_t[-1] / mon.N_t[i1]
    resid = max(linear.monitors.max_constraint_residual(), mon.max_constraint_residual())
    ok = (abs(lin.fit.slope + 0.75) <= 0.1 and -0.9 <= non.fit.slope <= -0.6 and non.band <= 4
          and n_ratio <= 10 and resid <= 1e-8 and not full.warnings)
    verdict("small-data L1-L2 decay", ok,
            f"linear slope={lin.fit.slope:.3f} nonlinear slope={non.fit.slope:.3f} band={non.band:.2f} "
            f"N(T)/N(1)={n_ratio:.3f} constraint residual={resid:.1e}")


def test_quadratic_nonlinearity():
    eps = np.geomspace(1e-3, 1e-6, 7)
    base = SimulationConfig(grid=GridConfig(32, 16 * math.pi, 3))
    qn, rn = [], []
    for e in eps:
        cfg = SimulationConfig(grid=base.grid, init=InitConfig(epsilon=float(e)))
        Q, R = nonlinear_terms(build_initial_data(cfg))
        qn.append(np.linalg.norm(Q))
        rn.append(np.linalg.norm(R))
    sq = np.polyfit(np.log(eps[-3:]), np.log(qn[-3:]), 1)[0]
    sr = np.polyfit(np.log(eps[-3:]), np.log(rn[-3:]), 1)[0]
    verdict("quadratic nonlinearity", abs(sq - 2) <= 0.01 and abs(sr - 2) <= 0.01,
            f"Q exponent={sq:.5f} R exponent={sr:.5f}")


def test_interpolation_inequality():
    single = []
    for n, k in ((1, 4), (2, 3), (3, 2)):
        f = from_function(lambda *x: np.cos(k * x[0] + (2 * x[-1] if n > 1 else 0)), n, 32, 2 * math.pi)
        single.append(float(np.abs(gn_ratios(f) - 1).max()))
    coarse = gn_check(list(gn_corpus(40, 16, band=3, seed=1))).max_ratio
    fine = gn_check(list(gn_corpus(40, 32, band=3, seed=1))).max_ratio
    drift = float(np.abs(fine / coarse - 1).max())
    ok = max(single) <= 1e-13 and np.all(np.isfinite(coarse)) and drift <= 0.05
    verdict("interpolation inequality", ok,
            f"single-mode error={max(single):.1e} corpus max={coarse.max():.4f} resolution drift={drift:.1e}")


def test_general_constrained_systems():
    exact = all(
        two_two_one_prediction(n, k, l, j) == predict(NormSpec(2, 1, 2, k, j, l, n), EtaProfile(1, 2))
        for n in (1, 2, 3) for k in range(3) for j in range(k + 1) for l in range(5)
    )
    sysm = build_euler_maxwell()
    g = gaussian(3, 32, 16 * math.pi)
    w0 = project_constraints(sysm, GridField(np.ones((10, 1, 1, 1)) * g.values[None], g.box, components=10))
    rep = verify_decay_property(sysm, w0, NormSpec(2, 1, 2, 0, 0, 2, 3))
    errs = constraint_split(sysm.Q, sysm.R).identity_errors()
    ok = (exact and rep.prediction.low_exp == Fraction(-3, 4) and rep.constraint_drift <= 1e-9
          and max(errs.values()) <= 1e-12)
    verdict("general constrained systems", ok,
            f"rational exponents equal={exact} constraint drift={rep.constraint_drift:.1e} "
            f"projector error={max(errs.values()):.1e} decay slope={rep.fit.slope:.3f}")


def test_euler_maxwell_structure():
    s = check_structure(build_euler_maxwell())
    ok = s.A0_spd and s.Aj_symmetric and s.L_nonneg and s.L_kernel_nontrivial and not s.L_symmetric
    verdict("Euler-Maxwell structure", ok, str(s.as_dict()))
