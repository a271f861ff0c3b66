"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line in ``REPORT``; ``conftest.py`` prints
them at the end of the run. The Monte Carlo criteria share one simulation
of N = M = 1e5 paths at five drifts.
"""
import math
import os
import time

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from ohlcvol.cli import main as cli_main
from ohlcvol.density import (
    cond_high_low_pdf,
    cond_high_pdf,
    joint_pdf_arrays,
    two_boundary_density,
)
from ohlcvol.estimators import (
    classic_diagram,
    diagram_moments,
    efficient_variance_diagram,
    efficient_volatility_diagram,
    estimator_pdf_variance,
    estimator_pdf_volatility,
    lower_bound_variance,
    renormalize,
)
from ohlcvol.kernels import g_n_radial, g_n_series, radial_constant
from ohlcvol.mle import ml_volatility_arrays
from ohlcvol.montecarlo import convergence_study, moments_of, simulate_triples
from ohlcvol.quasi import build_quasi, composed_diagram, epsilon_matrix, first_order_weights, quasi_variance

from oracles import radial_moment_gamma0

REPORT = {}

STEPS = 100_000
PATHS = 100_000
SEED = 20240607
MC_GAMMAS = (0.0, 0.5, 1.0, 1.5, 2.0)


def record(number, ok, detail):
    REPORT[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    print(REPORT[number])
    return ok


def gl(a, b, n):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@pytest.fixture(scope="module")
def triples():
    start = time.perf_counter()
    out = simulate_triples(STEPS, PATHS, list(MC_GAMMAS), seed=SEED)
    print(f"simulated {PATHS} paths of {STEPS} steps at {len(MC_GAMMAS)} drifts in {time.perf_counter() - start:.0f} s")
    return out


def at_gamma(triples, gamma):
    t = triples[:, MC_GAMMAS.index(gamma), :]
    return t[:, 0], t[:, 1], t[:, 2]


def ks_distance(samples, u, pdf):
    cdf = integrate.cumulative_trapezoid(pdf, u, initial=0.0)
    x = np.sort(samples)
    model = np.interp(x, u, cdf, right=cdf[-1])
    n = x.size
    upper = np.arange(1, n + 1) / n - model
    lower = model - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def test_criterion_01_lower_bound(capsys):
    start = time.perf_counter()
    code = cli_main(["curves", "bound_V", "--gamma", "0"])
    out = capsys.readouterr().out
    elapsed = time.perf_counter() - start
    value = float(out.splitlines()[1].split(",")[2])
    ok = code == 0 and abs(value - 0.2583) <= 3e-3 and elapsed <= 60
    assert record(1, ok, f"V(0) = {value:.5f} (target 0.2583 +- 0.003), {elapsed:.1f} s"), REPORT[1]


def test_criterion_02_classic_variances():
    start = time.perf_counter()
    rs, gk = classic_diagram("RS"), classic_diagram("GK")
    rs_var = diagram_moments(rs, 0.0)[1]
    gk_mean, gk_var = diagram_moments(gk, 0.0)
    means = {g: diagram_moments(rs, g)[0] for g in (0.0, 0.5, 1.0, 2.0)}
    elapsed = time.perf_counter() - start
    ok = (
        abs(rs_var - 0.331) <= 5e-3
        and abs(gk_var - 0.27) <= 1e-2
        and all(abs(m - 1.0) <= 5e-3 for m in means.values())
        and elapsed <= 120
    )
    detail = (
        f"Var RS {rs_var:.4f}, Var GK {gk_var:.4f}, E RS "
        + ", ".join(f"{m:.5f}" for m in means.values())
        + f", {elapsed:.1f} s"
    )
    assert record(2, ok, detail), REPORT[2]


def test_criterion_03_volatility_block():
    parts = {}
    for name in ("RS", "GK"):
        mean, var = diagram_moments(classic_diagram(name, "volatility"), 0.0)
        parts[name] = (mean, var, var / mean**2)
    eff_mean, eff_var = diagram_moments(efficient_volatility_diagram(0.0), 0.0)
    checks = [
        abs(parts["GK"][2] - 0.06379) <= 2e-3,
        abs(parts["RS"][2] - 0.08186) <= 2e-3,
        abs(eff_var - 0.06201) <= 2e-3,
        abs(1 - parts["GK"][0] - 0.0309) <= 2e-3,
        abs(1 - parts["RS"][0] - 0.0386) <= 2e-3,
    ]
    detail = (
        f"Var/E^2 GK {parts['GK'][2]:.5f} RS {parts['RS'][2]:.5f} (raw {parts['GK'][1]:.5f}, {parts['RS'][1]:.5f}), "
        f"eff(0) {eff_var:.5f}; bias GK {1 - parts['GK'][0]:.4f} RS {1 - parts['RS'][0]:.4f}"
    )
    assert record(3, all(checks), detail), REPORT[3]


def test_criterion_04_bound_attainment():
    worst_gap = 0.0
    for g0 in (0.0, 0.5, 1.0):
        var = diagram_moments(efficient_variance_diagram(g0), g0)[1]
        worst_gap = max(worst_gap, abs(var - lower_bound_variance(g0)))
    competitors = [classic_diagram("RS"), classic_diagram("GK"), efficient_variance_diagram(1.0)]
    grid = np.round(np.arange(-2.0, 2.0001, 0.25), 10)
    slack = np.inf
    for g in grid:
        bound = lower_bound_variance(g)
        for d in competitors:
            slack = min(slack, diagram_moments(renormalize(d, g), g)[1] - bound)
    ok = worst_gap <= 5e-3 and slack >= -1e-9
    detail = f"max |Var eff(g0) - V(g0)| = {worst_gap:.2e}; min renormalized excess over V on {grid.size} drifts = {slack:.2e}"
    assert record(4, ok, detail), REPORT[4]


def test_criterion_05_ml_and_convergence(triples):
    start = time.perf_counter()
    h, l, c = at_gamma(triples, 0.0)
    s = ml_volatility_arrays(h, l, c).s_hat
    vol = moments_of(s)
    var = moments_of(s * s)
    norm = var.variance / var.mean**2
    ml_time = time.perf_counter() - start

    rows = convergence_study([0.0], [100, 1_000, 10_000, 100_000], PATHS, seed=SEED)
    rs = [r for r in rows if r["estimator"] == "RS"]
    gk = [r for r in rows if r["estimator"] == "GK"]
    rs_means = [r["mean"] for r in rs]
    monotone = all(a < b for a, b in zip(rs_means, rs_means[1:])) and rs_means[-1] <= 1.0 + 3 * rs[-1]["std_error"]
    desk = 0.990 <= rs_means[-1] <= 1.000
    twins = all(abs(a["mean"] - b["mean"]) <= 3 * math.hypot(a["std_error"], b["std_error"]) for a, b in zip(rs, gk))
    checks = [
        abs(vol.mean - 0.9202) <= 0.01,
        abs(vol.variance - 0.0712) <= 5e-3,
        abs(var.mean - 0.9179) <= 0.01,
        abs(var.variance - 0.2756) <= 0.01,
        abs(norm - 0.3271) <= 0.015,
        monotone,
        desk,
        twins,
        ml_time <= 1800,
    ]
    detail = (
        f"E s_ML {vol.mean:.4f}, Var {vol.variance:.4f}, E d_ML {var.mean:.4f}, Var {var.variance:.4f}, "
        f"Var d_norm {norm:.4f}; R&S mean by N " + ", ".join(f"{m:.4f}" for m in rs_means)
        + f"; GK within 3 SE: {twins}"
    )
    assert record(5, all(checks), detail), REPORT[5]


@pytest.mark.skipif(not os.environ.get("OHLCVOL_LONG"), reason="opt-in long run (set OHLCVOL_LONG=1)")
def test_long_run_million_paths():
    t = simulate_triples(1_000_000, 1_000_000, [0.0], seed=SEED, cache=False)[:, 0, :]
    mean = moments_of(t[:, 0] * (t[:, 0] - t[:, 2]) + t[:, 1] * (t[:, 1] - t[:, 2]))
    assert abs(mean.mean - 0.9987) <= 3 * mean.std_error + 5e-4


def test_criterion_06_density():
    masses = {}
    x, wx = gl(0.0, 7.0, 64)
    w2 = wx[:, None] * wx[None, :]
    for gamma in (0.0, 0.5, 1.0):
        cz, cw = gl(gamma - 8.5, gamma + 8.5, 48)
        total = 0.0
        for cc, w in zip(cz, cw):
            hh, ll = np.meshgrid(max(0.0, cc) + x, min(0.0, cc) - x, indexing="ij")
            total += w * np.sum(w2 * joint_pdf_arrays(hh, ll, cc, gamma))
        masses[gamma] = total
    rng = np.random.default_rng(6)
    marg = 0.0
    for _ in range(10):
        cc = rng.uniform(-1.5, 1.5)
        hh = max(0.0, cc) + rng.uniform(0.05, 2.0)
        lg, lw = gl(min(0.0, cc) - 8.0, min(0.0, cc), 200)
        marg = max(marg, abs(np.sum(lw * cond_high_low_pdf(hh, lg, cc)) - cond_high_pdf(hh, cc)))
    hb, lb, u, v, gamma = 1.0, -1.0, 0.5, -0.25, 0.8
    zeros = max(
        abs(two_boundary_density(hb + u, hb, lb, 1.0, gamma, u, v)),
        abs(two_boundary_density(lb + v, hb, lb, 1.0, gamma, u, v)),
    )
    mass_err = max(abs(m - 1.0) for m in masses.values())
    ok = mass_err <= 1e-5 and marg <= 1e-6 and zeros <= 1e-10
    detail = f"max |mass - 1| {mass_err:.1e}, max marginal error {marg:.1e}, boundary values {zeros:.1e}"
    assert record(6, ok, detail), REPORT[6]


def test_criterion_07_kernel_routes():
    rng = np.random.default_rng(7)
    phi = rng.uniform(-0.5 * math.pi, 0.0, 20)
    lo, hi = np.arctan(np.sin(phi)), np.arctan(np.cos(phi))
    theta = lo + rng.uniform(0.02, 0.98, 20) * (hi - lo)
    worst = 0.0
    for n in (1, 2, 4):
        for gamma in (0.0, 0.5, 1.0):
            for t, p in zip(theta, phi):
                a = g_n_series(n, t, p, gamma).value
                b = g_n_radial(n, t, p, gamma).value
                worst = max(worst, abs(a - b) / abs(b))
    closed = 0.0
    for n in (1, 2, 4):
        for xx, cc in [(0.7, 0.2), (1.0, -0.5), (0.4, 0.3), (2.0, 1.1)]:
            val = radial_moment_gamma0(n, xx, cc) * abs(2 * xx - cc) ** (3 + n)
            closed = max(closed, abs(val / radial_constant(n) - 1.0))
    ok = worst <= 1e-6 and closed <= 1e-8
    detail = f"max relative route gap {worst:.1e} over 180 evaluations; closed form F(n) relative error {closed:.1e}"
    assert record(7, ok, detail), REPORT[7]


def test_criterion_08_estimator_pdfs(triples):
    h, l, c = at_gamma(triples, 0.0)
    uv = np.linspace(0.0, 8.0, 1601)
    us = np.linspace(0.0, 3.0, 1201)
    results = []
    for label, var_d, vol_d in (
        ("RS", classic_diagram("RS"), classic_diagram("RS", "volatility")),
        ("GK", classic_diagram("GK"), classic_diagram("GK", "volatility")),
        ("eff(0)", efficient_variance_diagram(0.0), efficient_volatility_diagram(0.0)),
    ):
        fv = estimator_pdf_variance(uv, var_d, 0.0)
        fs = estimator_pdf_volatility(us, vol_d, 0.0)
        mass_v = integrate.trapezoid(fv, uv)
        mass_s = integrate.trapezoid(fs, us)
        ks_v = ks_distance(var_d.estimate(h, l, c), uv, fv)
        ks_s = ks_distance(vol_d.estimate(h, l, c), us, fs)
        results.append((label, mass_v, mass_s, ks_v, ks_s))
    ok = all(abs(mv - 1) <= 1e-3 and abs(ms - 1) <= 1e-3 and kv < 0.01 and ks < 0.01 for _, mv, ms, kv, ks in results)
    detail = "; ".join(f"{lab} mass {mv:.5f}/{ms:.5f} KS {kv:.4f}/{ks:.4f}" for lab, mv, ms, kv, ks in results)
    assert record(8, ok, detail + " (variance/volatility)"), REPORT[8]


def test_criterion_09_quasi(triples):
    h, l, c = at_gamma(triples, 0.0)
    v0 = lower_bound_variance(0.0)
    gk_var = diagram_moments(classic_diagram("GK"), 0.0)[1]
    checks = []
    parts = []
    for width in (0.5, 1.0):
        spec = build_quasi(1, width)
        eps = epsilon_matrix(spec.nodes)
        h0, h1 = first_order_weights(eps)
        w = spec.weights
        closed_gap = max(abs(w[1] - h0), abs(w[0] - h1))
        var0 = quasi_variance(spec, 0.0)
        mc_var = moments_of(composed_diagram(spec).estimate(h, l, c))
        checks += [spec.residual <= 1e-8, w[0] == w[2], closed_gap <= 1e-10, v0 <= var0 <= gk_var]
        parts.append(
            f"Gamma={width:g}: residual {spec.residual:.1e}, closed-form gap {closed_gap:.1e}, "
            f"Var(0) {var0:.4f} (MC {mc_var.variance:.4f} +- {mc_var.variance_se:.4f})"
        )
    detail = "; ".join(parts) + f"; required interval [{v0:.4f}, {gk_var:.4f}]"
    assert record(9, all(checks), detail), REPORT[9]


def test_criterion_10_theory_vs_simulation(triples):
    diagrams = {
        "RS": classic_diagram("RS"),
        "GK": classic_diagram("GK"),
        "eff(0)": efficient_variance_diagram(0.0),
        "eff(0.5)": efficient_variance_diagram(0.5),
        "eff(1)": efficient_variance_diagram(1.0),
    }
    worst = -np.inf
    failures = []
    for gamma in MC_GAMMAS:
        h, l, c = at_gamma(triples, gamma)
        for name, d in diagrams.items():
            mean, var = diagram_moments(d, gamma)
            mc = moments_of(d.estimate(h, l, c))
            for what, q, m, se in (("mean", mean, mc.mean, mc.std_error), ("var", var, mc.variance, mc.variance_se)):
                excess = abs(m - q) - (3 * se + 0.01)
                worst = max(worst, excess)
                if excess > 0:
                    failures.append(f"{name} {what} at {gamma:g}: MC {m:.4f} vs {q:.4f}")
    detail = f"{len(MC_GAMMAS) * len(diagrams) * 2} comparisons, worst margin {worst:+.4f}"
    if failures:
        detail += "; " + "; ".join(failures)
    assert record(10, not failures, detail), REPORT[10]
