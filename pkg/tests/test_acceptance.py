"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The quantitative experiments run through the same entry points as the CLI
(`expcli.run_experiment` on default or pinned configs), so this module
exercises the full production path.  Criteria that are pure library
properties (interpolation, commutator, Volterra identities, structural
invariants) call the library directly.

Run only this module with:  pytest tests/test_acceptance.py -v -s
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from kinsusp import expcli, hypo
from kinsusp import integrator as itg
from kinsusp import operators as ops
from kinsusp import sphere as sph
from kinsusp import state as st
from kinsusp import volterra as vt

K_EZ = 2 * np.pi * np.array([0.0, 0.0, 1.0])
KABS = 2 * np.pi


def _report(criterion: str, passed: bool, detail: str = "") -> None:
    flag = "PASS" if passed else "FAIL"
    print(f"[{flag}] {criterion}" + (f" -- {detail}" if detail else ""))


def _run(name: str, out: Path, ini: str = "", seed: int = 0) -> dict:
    cfg_path = None
    if ini:
        cfg_path = out / f"{name}.ini"
        cfg_path.write_text(ini)
    code = expcli.run_experiment(name, cfg_path, out, seed=seed)
    summary = json.loads(next((out / name).rglob("summary.json")).read_text())
    summary["exit_code"] = code
    return summary


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# -- criterion 1 -------------------------------------------------------------

def test_criterion_1_threshold_constants():
    t0 = time.time()
    b_c, gamma_c = vt.critical_constants()
    elapsed = time.time() - t0
    ok = abs(b_c - 0.623) <= 1e-3
    ok_gamma = abs(gamma_c - 4.0 / (3.0 * np.pi * b_c**2 * (1.0 - b_c**2))) < 1e-14
    ok_time = elapsed < 1.0
    _report("criterion 1: threshold constants",
            ok and ok_gamma and ok_time,
            f"b_c = {b_c:.6f}, Gamma_c = {gamma_c:.6f}, {elapsed * 1e3:.0f} ms")
    assert ok and ok_gamma and ok_time


# -- criteria 2 and 3 ----------------------------------------------------------

@pytest.fixture(scope="module")
def threshold_summary(outdir):
    t0 = time.time()
    summary = _run("threshold", outdir)
    summary["elapsed"] = time.time() - t0
    return summary


def test_criterion_2_pusher_threshold(threshold_summary):
    chk = threshold_summary["checks"]["pusher_crossing"]
    elapsed = threshold_summary["elapsed"]
    ok = chk["passed"] and elapsed < 600.0
    _report("criterion 2: pusher threshold crossing", ok,
            f"gamma|iota*|/|k| = {chk.get('gamma_iota_over_k', float('nan')):.5f} "
            f"(Gamma_c = {vt.critical_constants()[1]:.5f}), off by {chk['value']:.2f}% "
            f"(tol {chk['tolerance']}%), {elapsed:.0f} s")
    assert ok


def test_criterion_3_puller_stability(threshold_summary):
    chk = threshold_summary["checks"]["puller_stability"]
    _report("criterion 3: puller unconditional stability", chk["passed"],
            f"max lambda = {chk['value']:+.4f} over factors up to 10 Gamma_c")
    assert chk["passed"]


# -- criterion 4 ---------------------------------------------------------------

def test_criterion_4_enhanced_dissipation(outdir):
    t0 = time.time()
    summary = _run("enhanced-dissipation", outdir)
    elapsed = time.time() - t0
    chk = summary["checks"]["rate_scaling_slope"]
    ok = chk["passed"] and elapsed < 1800.0
    _report("criterion 4: enhanced dissipation scaling", ok,
            f"slope = {chk['slope']:.4f} (0.5 +- 0.1), eta = "
            f"{[round(x, 3) for x in chk['eta_rescaled']]}, {elapsed:.0f} s")
    assert ok


# -- criterion 5 ---------------------------------------------------------------

def test_criterion_5_mixing_decay(outdir):
    ini = "[params]\nnu = 1e-4\nL = 96\n"
    summary = _run("mixing", outdir, ini)
    chk = summary["checks"]["mixing_exponent"]
    _report("criterion 5: mixing decay", chk["passed"],
            f"exponent = {chk['exponent']:.3f} (-1.5 +- 0.25)")
    assert chk["passed"]


# -- criterion 6 ---------------------------------------------------------------

def test_criterion_6_hypocoercive_audit(outdir):
    ini = "[params]\nnu = 1e-3\nL = 48\n[schedule]\nB = 0.01\n"
    summary = _run("hypo-check", outdir, ini)
    res = summary["checks"]["lemma_residual"]
    mono = summary["checks"]["energy_monotone"]
    ok = res["passed"] and mono["passed"]
    _report("criterion 6: hypocoercive inequality audit", ok,
            f"worst residual/E(0) = {res['value']:.2e}, worst dE/E(0) = "
            f"{mono['value']:.2e} (slack {res['tolerance']:.0e}, 20 seeds)")
    assert ok


# -- criterion 7 ---------------------------------------------------------------

def test_criterion_7_interpolation_inequality():
    grid = sph.grid_for_band(16)
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for _ in range(200):
        g = sph.random_field(16, rng)
        sigma = float(10.0 ** rng.uniform(-4, 0))
        ax = rng.standard_normal(3)
        ax /= np.linalg.norm(ax)
        lhs, rhs = hypo.check_interpolation(g, sigma, ax, grid)
        worst = max(worst, lhs - rhs)
    ok = worst <= 1e-10
    _report("criterion 7: interpolation inequality (200 triples)", ok,
            f"worst lhs - rhs = {worst:.3e}")
    assert ok


# -- criterion 8 ---------------------------------------------------------------

def test_criterion_8_commutator_identity():
    rng = np.random.default_rng(77)
    grid = sph.grid_for_band(14, phi_pad=8)
    worst = 0.0
    for _ in range(50):
        Y = sph.random_field(12, rng)
        ax = rng.standard_normal(3)
        ax /= np.linalg.norm(ax)
        worst = max(worst, expcli._commutator_residual(Y, ax, grid))
    ok = worst <= 1e-8
    _report("criterion 8: commutator identity (50 fields)", ok,
            f"worst relative residual = {worst:.3e}")
    assert ok


# -- criterion 9 ---------------------------------------------------------------

def test_criterion_9_kernel_decay(outdir):
    ini = "[params]\nnu = 1e-2\nL = 32\n"
    summary = _run("kernel-decay", outdir, ini)
    env = summary["checks"]["free_envelope"]
    tail = summary["checks"]["diffusive_tail"]
    short = summary["checks"]["short_time_bounded"]
    ok = env["passed"] and tail["passed"] and short["passed"]
    _report("criterion 9: kernel decay envelopes", ok,
            f"C_fit = {env['C_fitted']:.3f} (late {env['C_late']:.3f}), "
            f"diffusive eta = {tail['eta']:.3f} > 0, sup short |K| = {short['value']:.3f}")
    assert ok


# -- criterion 10 ----------------------------------------------------------------

def test_criterion_10_volterra_machinery(outdir):
    summary = _run("volterra-resolvent", outdir)
    c = summary["checks"]
    ok = all(c[k]["passed"] for k in
             ("resolvent_identity", "neumann_vs_march", "scalar_second_order",
              "series_converged"))
    _report("criterion 10: Volterra machinery", ok,
            f"residual = {c['resolvent_identity']['value']:.2e}, "
            f"agreement = {c['neumann_vs_march']['value']:.2e}, "
            f"Richardson = {c['scalar_second_order']['value']:.3f}")
    assert ok


# -- criterion 11 ----------------------------------------------------------------

def test_criterion_11_nonlinear_stability(outdir):
    t0 = time.time()
    ini = "[params]\nnu = 1e-2\nkmax = 2\nL = 12\n[run]\ntransport = split\ndt = 0.05\n"
    summary = _run("nonlinear-stability", outdir, ini, seed=11)
    elapsed = time.time() - t0
    c = summary["checks"]
    names = ("state_bounded", "velocity_decayed", "mass_conserved",
             "reality_preserved", "incompressibility")
    ok = all(c[k]["passed"] for k in names) and elapsed < 3600.0
    _report("criterion 11: nonlinear desk-scale stability", ok,
            f"sup|psi|/|psi_in| = {c['state_bounded']['sup_psi'] / c['state_bounded']['initial']:.2f} "
            f"(bound {c['state_bounded']['tolerance'] / c['state_bounded']['initial']:.0f}), "
            f"u_end/u_peak = {c['velocity_decayed']['value'] / c['velocity_decayed']['peak_u']:.2e}, "
            f"{elapsed / 60:.1f} min")
    assert ok


# -- criterion 12 ----------------------------------------------------------------

def test_criterion_12_structural_suite():
    results = {}

    # transform round-trip at 1e-12
    grid = sph.grid_for_band(16)
    f = sph.random_field(16, np.random.default_rng(5))
    back = sph.analyze(sph.synthesize(f, grid), grid, 16)
    results["round_trip"] = (np.abs(back.coeffs - f.coeffs).max()
                             / np.abs(f.coeffs).max()) <= 1e-12

    # mass conservation over a full nonlinear run at 1e-12
    params = st.Params(gamma=1.0, iota=-3.0, nu=1e-2, kmax=1, L=8)
    s0 = st.random_state(params, seed=3, profile=st.SpectrumProfile(amplitude=1e-3))
    out = itg.evolve(s0, params, itg.RunConfig(dt=0.02, t_end=1.0), observers=[
        ("mass", lambda t, s_, fl: abs(s_.mass())),
        ("real", lambda t, s_, fl: s_.reality_defect()),
        ("incomp", lambda t, s_, fl: fl.incompressibility_defect()),
    ])
    scale = st.sobolev_norm(s0, 0.0)
    results["mass_conservation"] = out["mass"].max() <= 1e-12 * scale
    results["reality_each_step"] = out["real"].max() <= 1e-12 * scale
    results["incompressibility_each_step"] = out["incomp"].max() <= 1e-12 * scale

    # k = 0 heat mode matches the exact factor at 1e-8
    nu = 2e-2
    params0 = st.Params(nu=nu, kmax=0, L=10)
    s = st.KineticState.zeros(0, 10)
    raw = np.zeros((11, 21), dtype=complex)
    for l in range(1, 11):
        raw[l, 10] = 1.0 / (1 + l)
    s.coeffs[0] = raw
    fin = itg.evolve(s, params0, itg.RunConfig(dt=0.05, t_end=2.0))["_final"]
    ls = np.arange(11)
    exact = raw * np.exp(-nu * ls * (ls + 1) * 2.0)[:, None]
    results["heat_mode"] = np.abs(fin.coeffs[0] - exact).max() <= 1e-8

    # order-2 self-convergence ratio ~ 4
    g0 = sph.random_field(10, np.random.default_rng(6))

    def run(dt):
        cfg = itg.RunConfig(dt=dt, t_end=1.0, scheme=2)
        return itg.solve_single_mode(K_EZ, g0, 1e-2, cfg).fields[-1].coeffs

    ref = run(0.0025)
    ratio = np.abs(run(0.02) - ref).max() / np.abs(run(0.01) - ref).max()
    results["self_convergence"] = 3.0 < ratio < 5.5

    ok = all(results.values())
    detail = ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in results.items())
    _report("criterion 12: structural suite", ok, detail + f", ratio = {ratio:.2f}")
    assert ok
