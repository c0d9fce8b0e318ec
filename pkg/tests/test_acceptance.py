"""Acceptance gate.

One test per shipped criterion. Each prints a single PASS/FAIL line with
the measured quantities and elapsed time, then asserts the published
tolerance and runtime budget. Expected values come from closed forms or
independent numerical oracles built in this file, never from the code
under test.
"""

import math
import time

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from logsymrate import (
    FitParams,
    ModelSpec,
    SplineTerm,
    SubmodelSpec,
    TruthSpec,
    apply_zero_policy,
    build_term_block,
    dump_json,
    export_component_curves,
    fit,
    fit_poisson,
    log_rate_correlation,
    normal_spec,
    penalized_loglik,
    simulate_table,
    simulated_envelope,
)
from logsymrate.cli import main as cli_main
from logsymrate.diagnostics import model_fitted_log_rate
from logsymrate.spline_bases import ncs_build, psp_build

from .conftest import ALL_GENERATORS, plain_spec, small_logsym_table, small_poisson_table


@pytest.fixture
def report(capsys):
    def _report(num, name, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {num} ({name}): {'PASS' if ok else 'FAIL'} [{detail}]")
        assert ok, f"criterion {num} ({name}): {detail}"

    return _report


# ---------------------------------------------------------------------------
# 1. closed-form oracles

def test_criterion_1_closed_forms(report):
    t0 = time.perf_counter()
    ptable = small_poisson_table(seed=30)
    pf = fit_poisson(ptable, ("intercept",))
    err_p = abs(pf.beta[0] - math.log(ptable.deaths.sum() / ptable.population.sum()))

    ltable = small_logsym_table(seed=31)
    spec = ModelSpec(generator=normal_spec(),
                     location=SubmodelSpec(covariates=("intercept",)),
                     dispersion=SubmodelSpec(covariates=("intercept",)))
    lf = fit(spec, ltable)
    y = ltable.log_t
    err_mean = abs(lf.beta[0] - y.mean())
    err_logvar = abs(lf.gamma[0] - math.log(np.mean((y - y.mean()) ** 2)))

    elapsed = time.perf_counter() - t0
    ok = err_p <= 1e-8 and err_mean <= 1e-6 and err_logvar <= 1e-6 and elapsed < 1.0
    report(1, "closed-form oracles", ok,
           f"poisson {err_p:.1e}, mean {err_mean:.1e}, logvar {err_logvar:.1e}, "
           f"{elapsed:.2f}s < 1s")


# ---------------------------------------------------------------------------
# 2. gradient stationarity, measured independently of the fitter

def _column_scales(spec, table):
    """RMS scale of every stacked design column, rebuilt from public parts."""
    scales = []
    for sub in (spec.location, spec.dispersion):
        for name in sub.covariates:
            col = {"intercept": np.ones(len(table)), "age": table.age,
                   "period": table.period}[name]
            scales.append(float(np.sqrt(np.mean(col * col))))
        for term in sub.terms:
            x = table.age if term.covariate == "age" else table.period
            B = build_term_block(term, x).B
            scales.extend(np.sqrt(np.mean(B * B, axis=0)))
    return np.asarray(scales)


def _fd_penalized_gradient(spec, table, result):
    """Fourth-order central differences of the public objective. Steps are
    sized so each coordinate shifts the standardized residuals by ~1e-4,
    which keeps truncation error far below the 1e-4 acceptance bound."""
    params = result.params
    th0 = np.concatenate([params.location, params.dispersion])
    n_loc = len(params.location)
    lam = dict(params.lam)

    def obj(vec):
        return penalized_loglik(spec, table, FitParams(
            location=vec[:n_loc], dispersion=vec[n_loc:], lam=lam))

    steps = np.maximum(
        1e-4 * math.sqrt(float(np.median(result.phi_hat)))
        / np.maximum(1.0, _column_scales(spec, table)),
        1e-9,
    )
    grad = np.empty_like(th0)
    for i, h in enumerate(steps):
        e = np.zeros_like(th0)
        e[i] = h
        grad[i] = (obj(th0 - 2 * e) - 8 * obj(th0 - e)
                   + 8 * obj(th0 + e) - obj(th0 + 2 * e)) / (12 * h)
    return grad


def test_criterion_2_gradient_stationarity(report):
    t0 = time.perf_counter()
    runs = []
    for k, gen in enumerate(ALL_GENERATORS):
        for seed in (40 + k, 50 + k):
            runs.append((gen.family, plain_spec(generator=gen),
                         small_logsym_table(seed=seed, phi=0.03, generator=gen)))
    # semiparametric fits so spline coordinates are exercised as well
    runs.append(("normal", ModelSpec(
        generator=normal_spec(),
        location=SubmodelSpec(covariates=("intercept", "period"), use_offset=True,
                              terms=(SplineTerm(kind="ncs", covariate="age",
                                                lam=10.0),)),
        dispersion=SubmodelSpec(covariates=("intercept",)),
    ), small_logsym_table(seed=60, phi=0.03)))
    runs.append(("student", ModelSpec(
        generator=ALL_GENERATORS[1],
        location=SubmodelSpec(covariates=("intercept", "age", "period"),
                              use_offset=True),
        dispersion=SubmodelSpec(covariates=("intercept",),
                                terms=(SplineTerm(kind="psp", covariate="age",
                                                  basis_dim=8, lam=50.0),)),
    ), small_logsym_table(seed=61, phi=0.03, generator=ALL_GENERATORS[1])))

    measured = []
    for family, spec, table in runs:
        f = fit(spec, table)
        if not f.converged:
            continue
        g = float(np.max(np.abs(_fd_penalized_gradient(spec, table, f))))
        measured.append((family, g))

    families = {fam for fam, _ in measured}
    worst = max(g for _, g in measured)
    elapsed = time.perf_counter() - t0
    ok = (len(measured) >= 10
          and families >= {"normal", "student", "powerexp", "contnormal"}
          and worst <= 1e-4 and elapsed < 60.0)
    report(2, "gradient stationarity", ok,
           f"{len(measured)} converged fits over {len(families)} families, "
           f"max fd gradient {worst:.2e} <= 1e-4, {elapsed:.1f}s < 60s")


# ---------------------------------------------------------------------------
# 3. spline correctness against quadrature

def _ncs_curvature_energy(knots, values):
    """Integral of the squared second derivative of the natural cubic
    interpolant. f'' is piecewise linear, so its square is piecewise
    quadratic and per-interval Simpson is exact."""
    d2 = CubicSpline(knots, values, bc_type="natural").derivative(2)
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        m = 0.5 * (a + b)
        total += (b - a) / 6.0 * (d2(a) ** 2 + 4.0 * d2(m) ** 2 + d2(b) ** 2)
    return float(total)


def test_criterion_3_spline_correctness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(300)
    knots = np.sort(rng.uniform(20.0, 90.0, size=12))
    K = ncs_build(knots).K

    worst_rel = 0.0
    for _ in range(20):
        a = rng.normal(size=12)
        quad = _ncs_curvature_energy(knots, a)
        form = float(a @ K @ a)
        worst_rel = max(worst_rel, abs(form - quad) / quad)

    null_ncs = max(float(np.max(np.abs(K @ np.ones(12)))),
                   float(np.max(np.abs(K @ knots))))
    Kp = psp_build(np.linspace(0.0, 10.0, 40), basis_dim=12, diff_order=2).K
    q = Kp.shape[0]
    null_psp = max(float(np.max(np.abs(Kp @ np.ones(q)))),
                   float(np.max(np.abs(Kp @ np.arange(q, dtype=float)))))

    elapsed = time.perf_counter() - t0
    ok = (worst_rel <= 1e-6 and null_ncs <= 1e-10 and null_psp <= 1e-10
          and elapsed < 10.0)
    report(3, "spline correctness", ok,
           f"quadrature rel err {worst_rel:.2e} <= 1e-6, null spaces "
           f"{null_ncs:.1e}/{null_psp:.1e} <= 1e-10, {elapsed:.1f}s < 10s")


# ---------------------------------------------------------------------------
# 4. parameter recovery on 320-cell tables

AGES_WIDE = tuple(float(a) for a in range(20, 100, 5))      # 16 bands
PERIODS_WIDE = tuple(float(p) for p in range(1994, 2014))   # 20 years
RECOVERY_TRUTH = dict(beta0=-24.0, beta_age=0.075, beta_period=0.006)


def test_criterion_4_parameter_recovery(report):
    t0 = time.perf_counter()
    beta_true = np.array([RECOVERY_TRUTH["beta0"], RECOVERY_TRUTH["beta_age"],
                          RECOVERY_TRUTH["beta_period"]])

    truth_p = TruthSpec(ages=AGES_WIDE, periods=PERIODS_WIDE, population=3e5,
                        noise="poisson_counts", **RECOVERY_TRUTH)
    probe = simulate_table(truth_p, 0)
    assert len(probe.table) == 320
    min_expected = float(np.min(probe.expected))
    assert min_expected >= 5.0

    hits_p = np.zeros(3, dtype=int)
    for seed in range(100):
        f = fit_poisson(simulate_table(truth_p, 1000 + seed).table,
                        ("intercept", "age", "period"))
        hits_p += np.abs(f.beta - beta_true) <= 3.0 * f.se

    truth_l = TruthSpec(ages=AGES_WIDE, periods=PERIODS_WIDE, population=3e5,
                        noise="logsym", generator=normal_spec(), phi=0.04,
                        **RECOVERY_TRUTH)
    target_l = np.append(beta_true, math.log(0.04))
    hits_l = np.zeros(4, dtype=int)
    n_conv = 0
    for seed in range(100):
        f = fit(plain_spec(), simulate_table(truth_l, 2000 + seed).table)
        n_conv += f.converged
        est = np.append(f.beta, f.gamma[0])
        se = np.append(f.beta_se, f.gamma_se[0])
        hits_l += np.abs(est - target_l) <= 3.0 * se

    elapsed = time.perf_counter() - t0
    ok = (int(hits_p.min()) >= 95 and int(hits_l.min()) >= 95
          and n_conv == 100 and elapsed < 120.0)
    report(4, "parameter recovery", ok,
           f"min expected count {min_expected:.1f}, poisson hits {hits_p.tolist()}, "
           f"logsym hits {hits_l.tolist()} (>=95/100), {n_conv}/100 converged, "
           f"{elapsed:.1f}s < 120s")


# ---------------------------------------------------------------------------
# 5. envelope calibration and misspecification detection

def test_criterion_5_envelope_calibration(report):
    t0 = time.perf_counter()
    fractions = []
    for rep in range(20):
        table = small_logsym_table(seed=500 + rep)
        f = fit(plain_spec(), table)
        env = simulated_envelope(f, table, "location", m_sims=100, level=0.95,
                                 seed=500 + rep)
        fractions.append(env.outside_fraction)
    mean_frac = float(np.mean(fractions))

    # multiplicative log-scale noise means variance grows with the squared
    # mean on the count scale; a Poisson fit assumes variance equal to the
    # mean, so its envelope must reject
    mis_table = small_logsym_table(seed=606, phi=0.04)
    pf = fit_poisson(mis_table, ("intercept", "age", "period"))
    mis_env = simulated_envelope(pf, mis_table, "deviance", m_sims=100,
                                 level=0.95, seed=606)
    mis_frac = mis_env.outside_fraction

    elapsed = time.perf_counter() - t0
    ok = mean_frac <= 0.10 and mis_frac >= 0.3 and elapsed < 600.0
    report(5, "envelope calibration", ok,
           f"well-specified mean outside {mean_frac:.3f} <= 0.10, misspecified "
           f"outside {mis_frac:.3f} >= 0.3, {elapsed:.1f}s < 600s")


# ---------------------------------------------------------------------------
# 6. direction of findings: semiparametric beats the Poisson GLM

def _bump_truth():
    """Nonlinear age effect plus dispersion that grows with age."""

    def f_age(a):
        return 1.1 * math.sin((a - 30.0) / 24.0) - 0.35 * ((a - 65.0) / 40.0) ** 2

    def phi(a, p):
        return math.exp(-3.2 + 1.6 * (a - 30.0) / 75.0)

    return TruthSpec(
        ages=tuple(float(a) for a in range(30, 110, 5)),
        periods=tuple(float(p) for p in range(1994, 2014)),
        beta0=-22.0, beta_period=0.007, f_age=f_age,
        population=8e4, noise="logsym", generator=normal_spec(), phi=phi,
        round_counts=True,
    )


SEMI_SPEC = ModelSpec(
    generator=normal_spec(),
    location=SubmodelSpec(covariates=("intercept", "period"), use_offset=True,
                          terms=(SplineTerm(kind="ncs", covariate="age",
                                            lam=10.0),)),
    dispersion=SubmodelSpec(covariates=("intercept",),
                            terms=(SplineTerm(kind="ncs", covariate="age",
                                              lam=100.0),)),
    jacobian_adjust=True,
)


def test_criterion_6_direction_of_findings(report):
    t0 = time.perf_counter()
    truth = _bump_truth()
    wins = 0
    for seed in range(20):
        table = apply_zero_policy(simulate_table(truth, 3000 + seed).table,
                                  "add_half")
        lf = fit(SEMI_SPEC, table)
        pf = fit_poisson(table, ("intercept", "age", "period"))
        rho_l = log_rate_correlation(model_fitted_log_rate(lf, table), table)
        rho_p = log_rate_correlation(model_fitted_log_rate(pf, table), table)
        wins += int(lf.aic < pf.aic and rho_l > rho_p)

    elapsed = time.perf_counter() - t0
    ok = wins >= 18 and elapsed < 600.0
    report(6, "direction of findings", ok,
           f"semiparametric preferred on {wins}/20 seeds (>=18), "
           f"{elapsed:.1f}s < 600s")


# ---------------------------------------------------------------------------
# 7. heavy smoothing drives ncs terms affine

def test_criterion_7_smoothness_limit(report):
    t0 = time.perf_counter()
    table = small_logsym_table(seed=70, phi=0.06)
    spec = ModelSpec(
        generator=normal_spec(),
        location=SubmodelSpec(covariates=("intercept", "period"), use_offset=True,
                              terms=(SplineTerm(kind="ncs", covariate="age",
                                                lam=1e8),)),
        dispersion=SubmodelSpec(covariates=("intercept",),
                                terms=(SplineTerm(kind="ncs", covariate="age",
                                                  lam=1e8),)),
    )
    f = fit(spec, table)

    worst_dev = 0.0
    worst_edf = 0.0
    for label in f.lam:
        xy = export_component_curves(f, label)
        X = np.column_stack([np.ones(len(xy)), xy[:, 0]])
        coef, *_ = np.linalg.lstsq(X, xy[:, 1], rcond=None)
        worst_dev = max(worst_dev, float(np.max(np.abs(xy[:, 1] - X @ coef))))
        worst_edf = max(worst_edf, float(f.edf[label]))

    elapsed = time.perf_counter() - t0
    ok = (f.converged and worst_dev <= 1e-3 and worst_edf <= 2.5
          and elapsed < 60.0)
    report(7, "smoothness limit", ok,
           f"max affine deviation {worst_dev:.2e} <= 1e-3, max edf "
           f"{worst_edf:.3f} <= 2.5, {elapsed:.1f}s < 60s")


# ---------------------------------------------------------------------------
# 8. CLI byte determinism

CLI_TRUTH = {
    "ages": {"min": 35.0, "max": 75.0, "count": 9},
    "periods": {"min": 1994.0, "max": 2012.0, "count": 10},
    "log_rate": {"beta0": -22.0, "beta_age": 0.07, "beta_period": 0.006},
    "population": 250000.0,
    "noise": {"kind": "logsym", "family": {"name": "normal"}, "phi": 0.05},
}

CLI_SEMI = {
    "model": "logsym",
    "family": {"name": "normal"},
    "location": {
        "covariates": ["intercept"],
        "use_offset": True,
        "terms": [
            {"kind": "ncs", "covariate": "age", "lambda": 10.0},
            {"kind": "ncs", "covariate": "period", "lambda": 10.0},
        ],
    },
    "dispersion": {
        "covariates": ["intercept"],
        "terms": [{"kind": "ncs", "covariate": "age", "lambda": 100.0}],
    },
}

CLI_POISSON = {"model": "poisson", "covariates": ["intercept", "age", "period"]}


def test_criterion_8_cli_determinism(report, tmp_path):
    t0 = time.perf_counter()
    paths = {}
    for name, doc in (("truth", CLI_TRUTH), ("semi", CLI_SEMI),
                      ("poisson", CLI_POISSON)):
        p = tmp_path / f"{name}.json"
        p.write_text(dump_json(doc), encoding="utf-8")
        paths[name] = str(p)

    def run_twice(cmd, tag, *extra):
        dirs = []
        for suffix in ("a", "b"):
            out = tmp_path / f"{tag}_{suffix}"
            code = cli_main([cmd, *extra, "--out", str(out)])
            assert code == 0, f"{cmd} exited {code}"
            dirs.append(out)
        a, b = dirs
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        return all((a / n).read_bytes() == (b / n).read_bytes() for n in names)

    same = {"simulate": run_twice("simulate", "sim", "--spec", paths["truth"])}
    inp = str(tmp_path / "sim_a" / "simulated.csv")
    same["fit"] = run_twice("fit", "fit", "--input", inp,
                            "--spec", paths["semi"])
    same["compare"] = run_twice("compare", "cmp", "--input", inp,
                                "--spec", paths["semi"],
                                "--spec2", paths["poisson"])
    same["envelope"] = run_twice("envelope", "env", "--input", inp,
                                 "--spec", paths["semi"], "--m-sims", "10")
    same["curves"] = run_twice("curves", "cur", "--input", inp,
                               "--spec", paths["semi"])

    elapsed = time.perf_counter() - t0
    ok = all(same.values()) and elapsed < 60.0
    bad = [k for k, v in same.items() if not v]
    report(8, "cli determinism", ok,
           f"all five subcommands byte-identical"
           f"{'' if not bad else ' except ' + ','.join(bad)}, {elapsed:.1f}s < 60s")
