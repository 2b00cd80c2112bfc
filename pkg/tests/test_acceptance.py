"""Acceptance criteria, one test per criterion.

``ACCEPTANCE_SCALE=smoke`` shrinks ensembles and the full-model resolution;
the default runs every criterion at its stated size (tens of minutes on one
core, dominated by the 400-trajectory full-model ensemble).
"""

import math
import time

import mpmath as mp
import numpy as np
import pytest
import scipy.linalg as sla

import oracles
from qndsqueeze import _kernels, theory
from qndsqueeze.dynamics import (
    SimConfig,
    run_trajectory,
    sme_step_cavity_removed,
    sse_step,
    state_moments,
    wiener_increments,
)
from qndsqueeze.harness import SweepSpec, compare_to_theory, fit_scaling, run_ensemble, sweep
from qndsqueeze.operators import (
    ModelParams,
    build_lambda_hamiltonian,
    coherent_spin_state,
    dicke_m_values,
    dicke_spin_ops,
)
from qndsqueeze.squeezing import SpinMoments, plateau_value, squeezing_parameter

pytestmark = pytest.mark.acceptance

BIAS = 0.015  # documented time-step bias of the full-model xi2


def params(N=45, g=0.05, kappa=0.4, epsilon=0.4):
    return ModelParams(N=N, g=g, kappa=kappa, epsilon=epsilon)


def removed(N, kappa_eff, **kw):
    return SimConfig(params(N), kappa_eff=kappa_eff, **kw)


def full(p, scale, total_time):
    return SimConfig(p, model="full", R=1000 if scale == "full" else 250, total_time=total_time)


def window_time(p, span=1.5, c=3.0):
    """Cavity filling plus ``span`` theoretical optimal times."""
    tau_m, _ = theory.optimum_nofeedback(p.N)
    return 2 * c / p.kappa + span * tau_m / p.kappa_eff


# ------------------------------------------------------------------- 1


def test_criterion_1_golden(criterion):
    t0 = time.perf_counter()
    taus = np.linspace(0.0, 1.2, 25)
    worst = 0.0

    def check(got, ref):
        nonlocal worst
        ref = float(ref)
        worst = max(worst, abs(float(got) - ref) / max(abs(ref), 1e-300))

    for N, eta in ((45, 1.0), (160, 1.0), (1000, 0.6), (20000, 1.0)):
        for t, v in zip(taus, theory.xi2_average_nofeedback(taus, N, eta)):
            check(v, oracles.xi2_average(t, N, eta))
        for t, v in zip(taus, theory.xi2_feedback(taus, N, eta)):
            check(v, oracles.xi2_feedback(t, N, eta))
        for jz in (0.0, 2.5, math.sqrt(N) / 2):
            for t, v in zip(taus, theory.xi2_conditional(taus, jz, N, eta)):
                check(v, oracles.xi2_conditional(t, jz, N, eta))
        mom = theory.moments_nofeedback(taus, N, eta)
        for i, t in enumerate(taus):
            for key, ref in oracles.moments(t, N, eta).items():
                check(mom[key][i], ref)
        xf, tf = theory.feedback_optimum(N, eta)
        check(xf, mp.e / (eta * N))
        check(tf, 1.0)
        t_as, x_as = theory.asymptotic_optimum_nofeedback(N, eta)
        check(t_as, mp.mpf(eta * N) ** (-mp.mpf(1) / 3))
        check(x_as, mp.mpf(1.5) * mp.mpf(eta * N) ** (-mp.mpf(2) / 3))
    qs = np.linspace(-15, 15, 25)
    for q, v in zip(qs, theory.gaussian_jz_distribution(qs, 160)):
        check(v, oracles.gaussian_density(q, 160))
    grid = np.linspace(0.05, 1.0, 20)
    for e in grid:
        check(theory.n0(e, 0.4), (2 * mp.mpf(e) / mp.mpf(0.4)) ** 2)
        n = (2 * mp.mpf(e) / mp.mpf(0.4)) ** 2
        check(theory.kappa_eff(0.05, 1.0, 0.4, float(n)), 4 * (2 * mp.mpf(0.05) ** 2) ** 2 * n / mp.mpf(0.4))
    for N in (1e3, 2e3, 5e3, 1e4, 2e4) * 4:
        check(theory.t_opt_full(N, 0.7, 0.4), mp.mpf(0.9) / (mp.mpf(0.7) * mp.mpf(N) ** mp.mpf(0.32)) + 6 / mp.mpf(0.4))
    g, k, gam, w = (2 * mp.pi * 7e3, 2 * mp.pi * 30e3, 2 * mp.pi * 7.5e3, 2 * mp.pi * 4.3e14)
    for N in np.geomspace(1e3, 1e6, 20):
        est = theory.sr_estimates(float(g), float(k), float(gam), float(w), N, 100)
        Nm = mp.mpf(N)
        check(est.delta_opt, g**2 * Nm / k)
        check(est.n_lim, (g * Nm / k) ** 2)
        check(est.P_lim, g**2 * Nm**2 * mp.mpf(theory.HBAR) * w / (4 * k))
        check(est.t_m, 100 * k / (4 * g**2 * mp.cbrt(Nm)) + 6 / k)
        check(est.xi2_m_db, -10 * mp.log10(mp.mpf(1.5) / Nm ** (mp.mpf(2) / 3)))
        check(est.NC0, Nm * 4 * g**2 / (k * gam))
    identity_gap = 0.0
    for N in (10, 45, 160, 1000, 10**5):
        for eta in (0.3, 1.0):
            avg = theory.xi2_average_nofeedback(taus, N, eta)
            cond = theory.xi2_conditional(taus, math.sqrt(N / 4), N, eta)
            identity_gap = max(identity_gap, float(np.max(np.abs(cond - avg) / avg)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and identity_gap < 1e-13 and elapsed < 1.0
    detail = f"max rel err {worst:.1e}, Gaussianity identity gap {identity_gap:.1e}, {elapsed:.2f} s"
    assert criterion(1, ok, detail), detail


# ---------------------------------------------------------------- 2 + 3


SCALING_N = (1000, 2000, 5000, 10000, 20000)


@pytest.fixture(scope="module")
def scaling_table(scale, cached):
    M = 200 if scale == "full" else 100
    spec = SweepSpec("N", SCALING_N, removed(1000, 1.0), M=M, base_seed=20240601)
    return cached(("scaling", M), lambda: sweep(spec))


def test_criterion_2_squeezing_scaling(scaling_table, criterion):
    f = fit_scaling(scaling_table, "xi2", n_min=1000)
    ok = 0.65 <= f.exponent <= 0.71 and 1.6 <= f.prefactor <= 2.2 and f.n_points == 5
    detail = f"alpha = {f.exponent:.3f} +- {f.exponent_err:.3f}, a = {f.prefactor:.2f} +- {f.prefactor_err:.2f}"
    assert criterion(2, ok, detail), detail


def test_criterion_3_time_scaling(scaling_table, criterion):
    f = fit_scaling(scaling_table, "topt", n_min=1000)
    g = fit_scaling(scaling_table, "xi2", n_min=1000)
    total = f.exponent + g.exponent
    sigma = math.hypot(f.exponent_err, g.exponent_err)
    ok = 0.29 <= f.exponent <= 0.36 and 0.7 <= f.prefactor <= 1.1 and abs(total - 1) <= sigma
    detail = (
        f"beta = {f.exponent:.3f} +- {f.exponent_err:.3f}, b = {f.prefactor:.2f} +- {f.prefactor_err:.2f}, "
        f"alpha + beta = {total:.3f} +- {sigma:.3f}"
    )
    assert criterion(3, ok, detail), detail


# ------------------------------------------------------------------- 4


def test_criterion_4_moments_and_minimum(cached, criterion):
    N, k = 160, 1.0
    res = cached(("moments", 100), lambda: run_ensemble(removed(N, k, total_time=1.0), 100, 1603))
    s = res.summary
    tau = s.times * k
    J = N / 2
    mm = s.mean_moments
    sim = {
        "var_Jx": (mm[:, 3] - mm[:, 0] ** 2) / (J / 2),
        "var_Jy": (mm[:, 4] - mm[:, 1] ** 2) / (J / 2),
        "contrast": (mm[:, 0] ** 2 + mm[:, 1] ** 2 + mm[:, 2] ** 2) / J**2,
    }
    ref = theory.moments_nofeedback(tau, N)
    inside = (tau > 0) & (tau <= 1.0 + 1e-12)
    rms = {key: float(np.sqrt(np.mean((sim[key][inside] / ref[key][inside] - 1) ** 2))) for key in sim}
    curve = theory.xi2_average_nofeedback(tau, N)
    tau_m, xi_m = theory.optimum_nofeedback(N)
    near = np.abs(tau - tau_m) <= 0.5 * tau_m
    dev = float(np.max(np.abs(s.mean_xi2[near] / curve[near] - 1)))
    ok = tau[-1] >= 1.0 and all(v < 0.03 for v in rms.values()) and dev < 0.10
    detail = ", ".join(f"{k_} rms {v:.2%}" for k_, v in rms.items()) + f", xi2 near minimum within {dev:.1%}"
    assert criterion(4, ok, detail), detail


# ------------------------------------------------------------------- 5


def test_criterion_5_conditional_scatter(cached, criterion):
    parts, ok = [], True
    for N in (45, 160):
        cfg = removed(N, 0.8)
        res = cached(("conditional", N), lambda: run_ensemble(cfg, 100, 500 + N))
        s = res.summary
        i = int(np.argmin(s.mean_xi2))
        tau = s.times[i] * 0.8
        curve = theory.xi2_conditional(tau, s.jz_traj[:, i], N)
        sigma = math.hypot(s.stderr_xi2[i], BIAS)
        frac = float(np.mean(np.abs(s.xi2_traj[:, i] - curve) <= 2 * sigma))
        at_mean = float(theory.xi2_conditional(tau, math.sqrt(N / 4), N))
        rel = abs(s.mean_xi2[i] / at_mean - 1)
        ok &= frac >= 0.9 and rel <= 0.10
        parts.append(f"N={N}: {frac:.0%} within 2 sigma, mean off curve by {rel:.1%}")
    detail = "; ".join(parts)
    assert criterion(5, ok, detail), detail


# ---------------------------------------------------------------- 6 + 7


@pytest.fixture(scope="module")
def bad_cavity(scale, cached):
    p = params()
    cfg = full(p, scale, round(window_time(p)))
    M = 400 if scale == "full" else 40
    return cached(("bad-cavity", scale, M), lambda: run_ensemble(cfg, M, 4400))


def test_criterion_6_full_model(bad_cavity, criterion):
    s = bad_cavity.summary
    n_steady = plateau_value(s.column("n"))
    p = params()
    rep = compare_to_theory(s, p.kappa_eff, bias=BIAS)
    ok = (
        bad_cavity.manifest.effective_M == bad_cavity.manifest.M
        and abs(n_steady / p.n0 - 1) <= 0.05
        and abs(s.c - 3.0) <= 0.3
        and rep.max_abs_z_near_min <= 2.0
    )
    detail = (
        f"M={s.M}, steady n = {n_steady:.3f} (n0 = {p.n0:g}), c = {s.c:.2f}, "
        f"max |z| near minimum = {rep.max_abs_z_near_min:.2f}, xi2_m = {s.xi2_m:.4f}"
    )
    assert criterion(6, ok, detail), detail


IN_REGIME = {
    "B": dict(g=0.05, kappa=0.3, epsilon=0.3),
    "C": dict(g=0.05, kappa=0.4, epsilon=0.6),
    "D": dict(g=0.04, kappa=0.3, epsilon=0.3),
}
OUT_OF_REGIME = dict(g=0.05, kappa=0.04, epsilon=0.04)


def test_criterion_7_universality(bad_cavity, scale, cached, criterion):
    M = 40
    points = {"A": (bad_cavity.summary.xi2_m, bad_cavity.xi2_m_sigma, theory.regime_report(params()).bad_cavity_ratio)}
    for name, kw in IN_REGIME.items():
        p = params(**kw)
        assert theory.regime_report(p).bad_cavity
        res = cached(("coupling-set", name, scale, M), lambda: run_ensemble(full(p, scale, round(window_time(p))), M, 7000 + ord(name)))
        points[name] = (res.summary.xi2_m, res.xi2_m_sigma, theory.regime_report(p).bad_cavity_ratio)
    names = sorted(points)
    worst_pair = 0.0
    agree = True
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            (xa, sa, _), (xb, sb, _) = points[a], points[b]
            gap = abs(xa - xb) / (math.hypot(sa, sb) + BIAS)
            worst_pair = max(worst_pair, gap)
            agree &= gap <= 1.0
    p_out = params(**OUT_OF_REGIME)
    assert not theory.regime_report(p_out).bad_cavity
    out = cached(("good-cavity", scale, M), lambda: run_ensemble(full(p_out, scale, 300.0), M, 7100))
    x_out, s_out = out.summary.xi2_m, out.xi2_m_sigma
    best_in = max(v[0] for v in points.values())
    s_in = max(v[1] for v in points.values())
    worse = x_out - best_in > 2 * math.hypot(s_out, s_in)
    # out of regime the photon number settles below n0 and differs from seed to seed
    late = np.array([plateau_value(r.column("n")) for r in out.records])
    photons_low = late.mean() < 0.9 * p_out.n0 and late.std() > 0.1 * p_out.n0
    departure = compare_to_theory(out.summary, p_out.kappa_eff, bias=BIAS).departure
    ok = agree and worse and photons_low and departure
    detail = (
        ", ".join(f"{k}: {v[0]:.4f}+-{v[1]:.4f} (dw/k={v[2]:.2f})" for k, v in sorted(points.items()))
        + f"; worst pair {worst_pair:.2f} of allowed; out of regime (dw/k="
        f"{theory.regime_report(p_out).bad_cavity_ratio:.2f}) xi2_m = {x_out:.4f}+-{s_out:.4f}, "
        f"steady n {late.mean():.2f}+-{late.std():.2f}, departure flagged: {departure}"
    )
    assert criterion(7, ok, detail), detail


# ------------------------------------------------------------------- 8


def _commutators():
    worst = 0.0
    for N in range(1, 21):
        ops = {k: v.toarray() for k, v in dicke_spin_ops(N).items()}
        jx, jy, jz = ops["Jx"], ops["Jy"], ops["Jz"]
        for a, b, c in ((jx, jy, jz), (jy, jz, jx), (jz, jx, jy)):
            worst = max(worst, float(np.max(np.abs(a @ b - b @ a - 1j * c))))
    return worst < 1e-12, f"commutators {worst:.0e}"


def _norm_and_trace():
    rng = np.random.default_rng(8)
    p = ModelParams(N=4, g=0.1, kappa=0.4, epsilon=0.4)
    cfg = SimConfig(p, model="full")
    d_c = cfg.d_c
    H = build_lambda_hamiltonian(p, d_c)
    from qndsqueeze.dynamics import initial_state, measurement_channel

    ch = measurement_channel(cfg)
    worst = 0.0
    for scheme in ("euler_maruyama", "milstein", "implicit_milstein"):
        psi = initial_state(cfg).data
        for w in wiener_increments(rng, 200, 0.01):
            psi = sse_step(psi, H, ch, 0.01, w, scheme)
            worst = max(worst, abs(np.linalg.norm(psi) - 1))
        m = dicke_m_values(12)
        rho = coherent_spin_state(12, math.pi / 2).to_density_matrix().data
        for w in wiener_increments(rng, 200, 0.01):
            rho = sme_step_cavity_removed(rho, m, 0.5, 0.7, 0.01, w, scheme)
            worst = max(worst, abs(np.trace(rho).real - 1), float(np.max(np.abs(rho - rho.conj().T))))
    return worst < 1e-10, f"norm/trace {worst:.0e}"


def _wiener():
    rng = np.random.default_rng(88)
    n, dt = 400_000, 2e-3
    w = wiener_increments(rng, n, dt)
    z_mean = abs(w.mean()) / math.sqrt(dt / n)
    z_var = abs(w.var() - dt) / (dt * math.sqrt(2 / n))
    return max(z_mean, z_var) < 4, f"Wiener z {max(z_mean, z_var):.1f}"


def _martingale():
    N, M = 40, 300
    cfg = removed(N, 1.0, total_time=0.5, sample_stride=200)
    recs = [run_trajectory(cfg, seed=9000 + i) for i in range(M)]
    jz = np.array([r.column("Jz") for r in recs])
    jz2 = np.array([r.column("Jz2") for r in recs])
    se_mean = np.maximum(jz.std(axis=0, ddof=1) / math.sqrt(M), 1e-12)
    total = jz.var(axis=0, ddof=1) + (jz2 - jz**2).mean(axis=0)
    se_total = np.maximum(jz2.std(axis=0, ddof=1) / math.sqrt(M), 1e-12)
    z1 = float(np.max(np.abs(jz.mean(axis=0)) / se_mean))
    z2 = float(np.max(np.abs(total - N / 4) / se_total))
    return max(z1, z2) < 4, f"martingale z {z1:.1f}, total variance z {z2:.1f}"


def _rotation_invariance():
    N = 20
    ops = {k: v.toarray() for k, v in dicke_spin_ops(N).items()}
    psi = sla.expm(-0.02j * ops["Jz"] @ ops["Jz"]) @ coherent_spin_state(N, math.pi / 2).data
    base = squeezing_parameter(SpinMoments.from_row(state_moments(psi, N), N))
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(25):
        phi = psi
        for axis, angle in zip(("Jx", "Jy", "Jz"), rng.uniform(-math.pi, math.pi, 3)):
            phi = sla.expm(-1j * angle * ops[axis]) @ phi
        worst = max(worst, abs(squeezing_parameter(SpinMoments.from_row(state_moments(phi, N), N)) / base - 1))
    return base < 0.8 and worst < 1e-8, f"rotation invariance {worst:.0e}"


def _strong_order():
    d_c, eps, kappa, T, M = 18, 0.4, 0.4, 10.0, 40
    m = dicke_m_values(1)
    dts = np.array([0.08, 0.04, 0.02, 0.01])
    alpha = oracles.free_cavity_amplitude(T, eps, kappa)
    c_op = np.diag(np.sqrt(np.arange(1, d_c)), 1)
    rng = np.random.default_rng(5)
    err = np.zeros((2, dts.size))
    for _ in range(M):
        dW = rng.standard_normal(int(round(T / dts[-1]))) * math.sqrt(dts[-1])
        for row, code in enumerate((1, 2)):
            for i, dt in enumerate(dts):
                psi = np.zeros((d_c, 2), dtype=complex)
                psi[0, 0] = 1.0
                f = int(round(dt / dts[-1]))
                _kernels.full_sse_chunk(psi, m, 0.0, eps, kappa, dt, dW.reshape(-1, f).sum(axis=1), code,
                                        *_kernels.tridiagonal_factors(d_c, m, 0.0, eps, kappa, dt))
                err[row, i] += abs(np.vdot(psi[:, 0], c_op @ psi[:, 0]) - alpha) / M
    orders = [np.polyfit(np.log(dts), np.log(e), 1)[0] for e in err]
    return all(abs(o - 1) <= 0.2 for o in orders), "strong order " + "/".join(f"{o:.2f}" for o in orders)


def test_criterion_8_properties(criterion):
    t0 = time.perf_counter()
    checks = [_commutators(), _norm_and_trace(), _wiener(), _martingale(), _rotation_invariance(), _strong_order()]
    elapsed = time.perf_counter() - t0
    ok = all(c[0] for c in checks) and elapsed < 300
    detail = ", ".join(c[1] for c in checks) + f", {elapsed:.0f} s"
    assert criterion(8, ok, detail), detail


# ------------------------------------------------------------------- 9


def test_criterion_9_strontium_design(criterion):
    two_pi = 2 * math.pi
    est = theory.sr_estimates(two_pi * 7e3, two_pi * 30e3, two_pi * 7.5e3, two_pi * 4.3e14, 1e4, 100)
    ok = abs(est.t_m / 150e-6 - 1) <= 0.10 and abs(est.xi2_m_db - 25) <= 1
    detail = f"t_m = {est.t_m * 1e6:.1f} us, squeezing {est.xi2_m_db:.2f} dB"
    assert criterion(9, ok, detail), detail
