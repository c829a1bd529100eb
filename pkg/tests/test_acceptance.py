"""Acceptance campaign at desk scale (n = 1e5 particles).

Each criterion prints one PASS/FAIL line.  Every run writes its CSVs under a
per-run directory; the determinism criterion re-executes all runs with the
same seeds and compares bytes.

    pytest tests/test_acceptance.py -s
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

from exk.exchange import (
    BetaFraction,
    PointFraction,
    UniformFraction,
    apply_T,
    contraction_constant,
    fraction_moments,
    measure_contraction,
    steady_state,
)
from exk.experiments import gamma_sweep, longtime_experiment, relaxation_experiment
from exk.hydro import MacroState, integrate_macro
from exk.kinetic import ConstantFitness, KineticParams, PopulationState, SaturatingFitness, simulate
from exk.measures import (
    Ensemble,
    Exponential,
    PointMass,
    ScaledBeta,
    Uniform,
    make_rng,
    moments,
    noise_floor,
    sample_from,
    standard_errors,
    wasserstein,
    write_ensemble_csv,
)
from exk.output import write_plot_data, write_table

pytestmark = pytest.mark.slow

N = 100_000
LAWS = {"uniform01": UniformFraction(), "point_mass_0.5": PointFraction(0.5), "beta_2_2": BetaFraction(2.0, 2.0)}


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")


def random_law(rng):
    kind = rng.integers(0, 3)
    if kind == 0:
        lo = rng.uniform(0, 2)
        return Uniform(lo, lo + rng.uniform(0.1, 3))
    if kind == 1:
        return Exponential(rng.uniform(0.2, 3))
    return ScaledBeta(rng.uniform(0.5, 4), rng.uniform(0.5, 4), rng.uniform(0.5, 5))


# --- the runs ------------------------------------------------------------
# Each takes an output directory, writes its CSVs there and returns what the
# criterion needs.  Seeds are fixed constants.


def run_moments(out: Path):
    """Pooled deviations of mean and m2 after one round, over 100 ensembles per law."""
    n = 10_000
    rows, pooled = [], {}
    for name, B in LAWS.items():
        l1, l2 = fraction_moments(B)
        d_mean = d_m2 = var_mean = var_m2 = 0.0
        for k in range(100):
            rng = make_rng(101, k)
            u = sample_from(random_law(rng), n, rng)
            m = moments(u)
            v = apply_T(u, n, B, make_rng(102, k))
            mv = moments(v)
            se_mean, se_m2 = standard_errors(v)
            expect_m2 = (1 + 2 * l2 - 2 * l1) * m.m2 + 2 * m.mean**2 * (l1 - l1**2)
            rows.append((name, k, m.mean, mv.mean, se_mean, expect_m2, mv.m2, se_m2))
            d_mean += mv.mean - m.mean
            d_m2 += mv.m2 - expect_m2
            var_mean += se_mean**2
            var_m2 += se_m2**2
        pooled[name] = (d_mean / math.sqrt(var_mean), d_m2 / math.sqrt(var_m2))
    write_table(out / "moments.csv", ["law", "ensemble", "mean_in", "mean_out", "se_mean", "m2_expected", "m2_out", "se_m2"], rows)
    return pooled


def _pairs(seed, equal_means):
    for k in range(20):
        rng = make_rng(seed, k)
        u1 = sample_from(random_law(rng), N, rng)
        u2 = sample_from(random_law(rng), N, rng)
        if equal_means:
            u2 = u2.scaled(float(np.mean(u1.samples) / np.mean(u2.samples)))
        yield k, u1, u2


def run_contraction(out: Path, p: int):
    laws = {k: LAWS[k] for k in ("uniform01", "point_mass_0.5")} if p == 2 else LAWS
    factors, rows = {}, []
    for name, B in laws.items():
        fs = []
        for k, u1, u2 in _pairs(200 + p, equal_means=(p == 2)):
            rep = measure_contraction(u1, u2, B, p, make_rng(300 + p, k))
            fs.append(rep.factor_empirical)
            rows.append((name, k, *rep.as_row().values()))
        factors[name] = fs
    write_table(out / f"contraction_w{p}.csv", ["law", "pair", "p", "factor_empirical", "factor_theoretical", "samples", "z1", "z2", "equal_means"], rows)
    return factors


def run_steady(out: Path):
    res = {}
    traces = {}
    us = []
    for seed in (401, 402):
        trace = []
        t0 = time.perf_counter()
        u = steady_state(1.0, UniformFraction(), N, make_rng(seed), tol=1e-3, max_iter=200, trace=trace)
        res.setdefault("seconds", []).append(time.perf_counter() - t0)
        us.append(u)
        traces[seed] = trace
        write_table(out / f"steady_{seed}_diagnostics.csv", ["iter", "w2_gap", "mean", "m2"], trace)
        write_ensemble_csv(u, out / f"steady_{seed}.csv")
    res["iterations"] = [len(t) for t in traces.values()]
    res["final_gap"] = [t[-1][1] for t in traces.values()]
    res["mean_z"] = [abs(np.mean(u.samples) - 1.0) / standard_errors(u)[0] for u in us]
    res["seed_gap"] = wasserstein(us[0], us[1], 2)
    res["floor"] = noise_floor(us[0], make_rng(403), p=2, repeats=5)
    dirac = steady_state(2.0, PointFraction(0.5), N, make_rng(404))
    write_ensemble_csv(dirac, out / "steady_point_fraction.csv")
    res["dirac_gap"] = wasserstein(dirac, Ensemble(np.full(N, 2.0)), 2)
    return res


def run_relaxation(out: Path):
    res = relaxation_experiment(UniformFraction(), 1.0, N, 15.0, 0.01, 2, 501)
    for k, tr in enumerate(res.trajectories):
        tr.write_csv(out / f"relaxation_{k}.csv")
    write_plot_data(out / "relaxation_w2sq.csv", res.series)
    return res.fit


def _sat_params(gamma, n_b=PointMass(1.0)):
    return KineticParams(r=1.0, beta=1.0, gamma=gamma, alpha=SaturatingFitness(1.0, 1.0), n_b=n_b, B=UniformFraction())


def run_macro(out: Path):
    # with alpha constant the steady profile never enters the right-hand side
    placeholder = Ensemble([1.0, 1.0])
    p = KineticParams(r=1.0, beta=1.0, gamma=10.0, alpha=ConstantFitness(0.5), n_b=Uniform(0.0, 2.0), B=UniformFraction())
    lam = 1.5
    t0 = time.perf_counter()
    path = integrate_macro(p, MacroState(0.0, 0.2, 3.0), 10.0, 0.01, placeholder)
    rel = 0.0
    rows = []
    for s in path:
        N_ex = lam * 0.2 / (0.2 + (lam - 0.2) * math.exp(-lam * s.t))
        Z_ex = 1.0 + 2.0 * math.exp(-lam * s.t)
        rel = max(rel, abs(s.N_bar / N_ex - 1), abs(s.Z_bar / Z_ex - 1))
        rows.append((s.t, s.N_bar, s.Z_bar, N_ex, Z_ex))
    eq = integrate_macro(p, MacroState(0.0, 1.5, 1.0), 10.0, 0.01, placeholder)
    drift = max(max(abs(s.N_bar - 1.5), abs(s.Z_bar - 1.0)) for s in eq)
    seconds = time.perf_counter() - t0
    write_table(out / "macro.csv", ["t", "N_bar", "Z_bar", "N_exact", "Z_exact"], rows)
    return rel, drift, seconds


HYDRO_GAMMAS = (10.0, 40.0, 160.0)


def run_hydro(out: Path):
    u1_bar = steady_state(1.0, UniformFraction(), N, make_rng(601))
    init = PopulationState(0.0, 0.5, u1_bar.scaled(2.0))
    points = gamma_sweep(_sat_params(HYDRO_GAMMAS[0]), HYDRO_GAMMAS, init, 3.0, 1e-3, 1e-3, 0.05, 3, 602, u1_bar)
    write_table(out / "hydro_summary.csv", ["gamma", "sup_error", "replicates"], [(p.gamma, p.sup_error, len(p.reports)) for p in points])
    rows = []
    for p in points:
        for k, rep in enumerate(p.reports):
            rows.extend((p.gamma, k, *r) for r in rep.rows)
            rep.trajectory.write_csv(out / f"hydro_gamma_{p.gamma:g}_rep_{k}.csv")
    write_table(out / "hydro.csv", ["gamma", "replicate", "t", "w2_term", "n_term", "total"], rows)
    return points


def run_longtime(out: Path):
    p = KineticParams(r=1.0, beta=1.0, gamma=10.0, alpha=ConstantFitness(0.5), n_b=Uniform(0.0, 2.0), B=UniformFraction())
    s1 = PopulationState(0.0, 0.2, sample_from(Uniform(0.0, 1.0), N, make_rng(701, 1)))
    s2 = PopulationState(0.0, 3.0, sample_from(Uniform(2.0, 4.0), N, make_rng(701, 2)))
    rep = longtime_experiment(p, s1, s2, 10.0, 0.01, 702, coupling="common_rng")
    for k, tr in enumerate(rep.trajectories, start=1):
        tr.write_csv(out / f"longtime_{k}.csv")
    write_plot_data(out / "longtime_w1.csv", rep.w1_series)
    return rep


def run_guards(out: Path):
    """Saturating fitness from low and high N0; traits checked at every tick; dt halving."""
    p = _sat_params(10.0, n_b=Uniform(0.0, 2.0))
    res = {"min_trait": math.inf, "bounds": []}
    for N0 in (0.05, 4.0):
        init = PopulationState(0.0, N0, sample_from(Uniform(0.0, 4.0), N, make_rng(801, int(N0 * 100))))

        def check(state):
            res["min_trait"] = min(res["min_trait"], float(state.tilde_n.samples[0]))

        tr = simulate(p, init, 6.0, 0.01, 0.1, make_rng(802), on_tick=check)
        tr.write_csv(out / f"guards_N0_{N0:g}.csv")
        res["bounds"].append((N0, tr.column("N"), p))
    init = PopulationState(0.0, 0.5, sample_from(Uniform(0.0, 4.0), 2 * N, make_rng(803)))
    ends = []
    for dt in (0.01, 0.005):
        tr = simulate(p, init, 4.0, dt, 1.0, make_rng(804))
        tr.write_csv(out / f"guards_dt_{dt:g}.csv")
        ends.append((tr.column("N")[-1], tr.column("Z")[-1]))
    res["dt_change"] = max(abs(a / b - 1) for a, b in zip(*ends))
    return res


RUNS = {
    "moments": run_moments,
    "contraction_w2": lambda out: run_contraction(out, 2),
    "contraction_w1": lambda out: run_contraction(out, 1),
    "steady": run_steady,
    "relaxation": run_relaxation,
    "macro": run_macro,
    "hydro": run_hydro,
    "longtime": run_longtime,
    "guards": run_guards,
}


@dataclass
class Campaign:
    root: Path
    results: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)

    def get(self, name):
        if name not in self.results:
            out = self.root / "first" / name
            out.mkdir(parents=True, exist_ok=True)
            t0 = time.perf_counter()
            self.results[name] = RUNS[name](out)
            self.seconds[name] = time.perf_counter() - t0
        return self.results[name]


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    return Campaign(tmp_path_factory.mktemp("acceptance"))


# --- criteria ------------------------------------------------------------


def test_criterion_01_moment_identities(campaign, capsys):
    pooled = campaign.get("moments")
    secs = campaign.seconds["moments"]
    worst = max(abs(z) for pair in pooled.values() for z in pair)
    ok = worst <= 3.0 and secs < 30
    detail = ", ".join(f"{k}: z_mean={a:+.2f} z_m2={b:+.2f}" for k, (a, b) in pooled.items())
    report(capsys, 1, ok, f"moment identities pooled over 100 ensembles, |z| <= 3 ({detail}); {secs:.1f}s")
    assert ok


def test_criterion_02_w2_contraction(campaign, capsys):
    factors = campaign.get("contraction_w2")
    secs = campaign.seconds["contraction_w2"]
    bounds = {
        "uniform01": min(contraction_constant(UniformFraction()) + 0.05, 0.866),
        "point_mass_0.5": min(contraction_constant(PointFraction(0.5)) + 0.05, 0.757),
    }
    worst = {k: max(v) for k, v in factors.items()}
    ok = all(worst[k] <= bounds[k] for k in bounds) and secs < 30
    detail = ", ".join(f"{k}: max {worst[k]:.4f} <= {bounds[k]:.3f}" for k in bounds)
    report(capsys, 2, ok, f"W2 contraction over 20 equal-mean pairs ({detail}); {secs:.1f}s")
    assert ok


def test_criterion_03_w1_non_expansion(campaign, capsys):
    factors = campaign.get("contraction_w1")
    secs = campaign.seconds["contraction_w1"]
    worst = max(max(v) for v in factors.values())
    ok = worst <= 1.02 and secs < 30
    report(capsys, 3, ok, f"W1 factor over 20 pairs x {len(factors)} laws, max {worst:.4f} <= 1.02; {secs:.1f}s")
    assert ok


def test_criterion_04_steady_state(campaign, capsys):
    r = campaign.get("steady")
    secs = campaign.seconds["steady"]
    ok = (
        max(r["iterations"]) <= 200
        and max(r["final_gap"]) < 1e-3
        and max(r["mean_z"]) <= 3
        and r["seed_gap"] < 2e-3 + r["floor"]
        and r["dirac_gap"] <= r["floor"]
        and secs < 120
    )
    report(
        capsys,
        4,
        ok,
        f"steady state: iterations {r['iterations']}, gaps {[f'{g:.1e}' for g in r['final_gap']]}, "
        f"two-seed W2 {r['seed_gap']:.4f} < {2e-3 + r['floor']:.4f}, point-fraction W2 to delta {r['dirac_gap']:.1e}; {secs:.1f}s",
    )
    assert ok


def test_criterion_05_relaxation_rate(campaign, capsys):
    fit = campaign.get("relaxation")
    secs = campaign.seconds["relaxation"]
    ok = fit.fitted_rate >= 1 / 6 - 0.03 and fit.r_squared >= 0.95 and secs < 120
    report(
        capsys,
        5,
        ok,
        f"relaxation rate {fit.fitted_rate:.4f} >= {1 / 6 - 0.03:.4f} (c={fit.predictions['c']:.4f}, 2c={fit.predictions['2c']:.4f}), "
        f"r^2 {fit.r_squared:.4f} on t in [{fit.window[0]:.1f}, {fit.window[1]:.1f}]; {secs:.1f}s",
    )
    assert ok


def test_criterion_06_macro_ode(campaign, capsys):
    rel, drift, secs = campaign.get("macro")
    ok = rel <= 1e-6 and drift <= 1e-8 and secs < 1
    report(capsys, 6, ok, f"RK4 vs closed form max rel err {rel:.1e}, equilibrium drift {drift:.1e}; {secs:.2f}s")
    assert ok


def test_criterion_07_hydrodynamic_limit(campaign, capsys):
    points = campaign.get("hydro")
    secs = campaign.seconds["hydro"]
    sup = [p.sup_error for p in points]
    w2 = [p.sup_w2 for p in points]
    ok = all(b < a for a, b in zip(sup, sup[1:])) and w2[-1] < w2[0] / 3 and secs < 600
    report(
        capsys,
        7,
        ok,
        "gamma sweep sup_error " + ", ".join(f"{p.gamma:g}: {s:.4f}" for p, s in zip(points, sup)) + f"; W2 ratio 160/10 = {w2[-1] / w2[0]:.3f} < 1/3; {secs:.0f}s",
    )
    assert ok


def test_criterion_08_long_time(campaign, capsys):
    rep = campaign.get("longtime")
    secs = campaign.seconds["longtime"]
    r = 1.0
    target = 1.5
    n_err = max(abs(N / target - 1) for N in rep.n_limit)
    ok = rep.fitted_rate >= 0.8 * r and n_err < 0.02 and secs < 300
    report(
        capsys,
        8,
        ok,
        f"W1 decay rate {rep.fitted_rate:.4f} >= {0.8 * r} (kappa {rep.kappa_predicted:.3f}, r^2 {rep.r_squared:.4f}), "
        f"terminal N {rep.n_limit[0]:.5f}/{rep.n_limit[1]:.5f} within 2% of {target}; {secs:.1f}s",
    )
    assert ok


def test_criterion_09_simulator_guards(campaign, capsys):
    g = campaign.get("guards")
    lines = []
    ok = g["min_trait"] >= 0.0 and g["dt_change"] < 0.01
    trajectories = [(N0, col, p) for N0, col, p in g["bounds"]]
    for rep in campaign.get("longtime").trajectories:
        p = KineticParams(1.0, 1.0, 10.0, ConstantFitness(0.5), Uniform(0.0, 2.0), UniformFraction())
        col = rep.column("N")
        trajectories.append((col[0], col, p))
    for pt in campaign.get("hydro"):
        for rep in pt.reports:
            col = rep.trajectory.column("N")
            trajectories.append((col[0], col, _sat_params(pt.gamma)))
    for N0, col, p in trajectories:
        lower = min(N0, p.r / p.beta)
        upper = max(N0, (p.r + p.alpha.max_value) / p.beta)
        ok = ok and col.min() >= lower * 0.98 and col.max() <= upper * 1.02
    lines.append(f"N bounds on {len(trajectories)} trajectories")
    lines.append(f"min trait {g['min_trait']:.3g}")
    lines.append(f"dt halving change {g['dt_change'] * 100:.2f}% < 1%")
    report(capsys, 9, ok, ", ".join(lines))
    assert ok


def test_criterion_10_determinism(campaign, capsys):
    mismatched, compared = [], 0
    for name in RUNS:
        campaign.get(name)
        again = campaign.root / "second" / name
        again.mkdir(parents=True, exist_ok=True)
        RUNS[name](again)
        first = campaign.root / "first" / name
        for f in sorted(first.iterdir()):
            compared += 1
            if f.read_bytes() != (again / f.name).read_bytes():
                mismatched.append(f"{name}/{f.name}")
    ok = not mismatched and compared > 0
    report(capsys, 10, ok, f"byte-identical reruns of {compared} files" + (f"; differing: {mismatched}" if mismatched else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
