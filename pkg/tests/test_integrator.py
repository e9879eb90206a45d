"""Time integration: exactness, convergence, invariant preservation."""

import numpy as np
import pytest

from kinsusp import integrator as itg
from kinsusp import operators as ops
from kinsusp import sphere as sph
from kinsusp import state as st

K_EZ = 2 * np.pi * np.array([0.0, 0.0, 1.0])

DIFF_ONLY = ops.TermFlags(free_transport=False, stress_feedback=False,
                          convection=False, jeffery_transport=False)


def test_pure_diffusion_exact_factor():
    params = st.Params(nu=3e-2, kmax=1, L=8)
    s = st.random_state(params, seed=1)
    cfg = itg.RunConfig(dt=0.37, t_end=0.37, terms=DIFF_ONLY)
    s1 = itg.step(s, params, cfg)
    ls = np.arange(9)
    fac = np.exp(-params.nu * ls * (ls + 1) * 0.37)[:, None]
    assert np.abs(s1.coeffs - fac * s.coeffs).max() == 0.0


def test_n_steps_equal_one_big_step():
    params = st.Params(nu=3e-2, kmax=1, L=8)
    s = st.random_state(params, seed=2)
    one = itg.step(s, params, itg.RunConfig(dt=0.3, t_end=0.3, terms=DIFF_ONLY))
    many = itg.evolve(s, params, itg.RunConfig(dt=0.1, t_end=0.3, terms=DIFF_ONLY))
    assert np.abs(many["_final"].coeffs - one.coeffs).max() < 1e-14


def test_single_mode_norm_conserved_without_diffusion():
    g0 = sph.random_field(10, np.random.default_rng(3))
    cfg = itg.RunConfig(dt=0.005, t_end=1.0, scheme=2,
                        terms=ops.TermFlags(diffusion=False))
    tr = itg.solve_single_mode(K_EZ, g0, 1e-3, cfg, record_fields=False,
                               observers=[("n", lambda t, f: f.norm())])
    drift = abs(tr.series["n"][-1] / tr.series["n"][0] - 1.0)
    # order-2 scheme: O(dt^3) per step accumulated
    assert drift < 200 * (0.005 * 2 * np.pi) ** 3 / 0.005


def test_self_convergence_second_order():
    g0 = sph.random_field(10, np.random.default_rng(4))

    def run(dt):
        cfg = itg.RunConfig(dt=dt, t_end=1.0, scheme=2)
        return itg.solve_single_mode(K_EZ, g0, 1e-2, cfg).fields[-1].coeffs

    ref = run(0.0025)
    e1 = np.abs(run(0.02) - ref).max()
    e2 = np.abs(run(0.01) - ref).max()
    assert 3.0 < e1 / e2 < 5.5


def test_heat_mode_analytic_decay():
    # k = 0 mode follows the heat equation exactly; observer series matches
    nu = 5e-2
    params = st.Params(nu=nu, kmax=0, L=8)
    s = st.KineticState.zeros(0, 8)
    rng = np.random.default_rng(5)
    raw = rng.standard_normal((9, 17)) + 1j * rng.standard_normal((9, 17))
    ls = np.arange(9)[:, None]
    ms = np.arange(-8, 9)[None, :]
    raw *= np.abs(ms) <= ls
    raw = 0.5 * (raw + st.conjugate_coeffs(raw))
    raw[0, 8] = 0.0
    s.coeffs[0] = raw
    cfg = itg.RunConfig(dt=0.05, t_end=2.0, record_every=4)
    out = itg.evolve(s, params, cfg, observers=[
        ("norm", lambda t, s_, f: st.sobolev_norm(s_, 0.0))])
    ts = out["t"]
    per_l = np.sum(np.abs(raw) ** 2, axis=1)
    expected = np.sqrt(np.array(
        [np.sum(per_l * np.exp(-2 * nu * ls.ravel() * (ls.ravel() + 1) * t)) for t in ts]))
    assert np.abs(out["norm"] - expected).max() < 1e-8 * expected[0]


def test_cocycle_property():
    params = st.Params(gamma=0.9, iota=-2.5, nu=1e-2, kmax=1, L=6)
    s0 = st.random_state(params, seed=6, profile=st.SpectrumProfile(amplitude=1e-3))
    mid = itg.evolve(s0, params, itg.RunConfig(dt=0.02, t_end=0.1))["_final"]
    fin1 = itg.evolve(mid, params, itg.RunConfig(dt=0.02, t_end=0.1))["_final"]
    fin2 = itg.evolve(s0, params, itg.RunConfig(dt=0.02, t_end=0.2))["_final"]
    assert np.abs(fin1.coeffs - fin2.coeffs).max() == 0.0


def test_evolve_t_end_zero_records_initial_only():
    params = st.Params(kmax=1, L=4)
    s = st.random_state(params, seed=7)
    out = itg.evolve(s, params, itg.RunConfig(dt=0.1, t_end=0.0))
    assert len(out["t"]) == 1 and out["t"][0] == 0.0


def test_evolve_deterministic():
    params = st.Params(gamma=0.5, iota=-1.0, nu=1e-2, kmax=1, L=6)
    s = st.random_state(params, seed=8, profile=st.SpectrumProfile(amplitude=1e-2))
    cfg = itg.RunConfig(dt=0.02, t_end=0.2)
    obs = [("n", lambda t, s_, f: st.sobolev_norm(s_, 0.0))]
    a = itg.evolve(s, params, cfg, obs)
    b = itg.evolve(s, params, cfg, obs)
    assert np.array_equal(a["n"], b["n"])


def test_invariants_preserved_each_step():
    params = st.Params(gamma=1.0, iota=-3.0, nu=1e-2, kmax=1, L=8)
    s = st.random_state(params, seed=9, profile=st.SpectrumProfile(amplitude=1e-3))
    cfg = itg.RunConfig(dt=0.02, t_end=0.3, debug_checks=True)
    out = itg.evolve(s, params, cfg, observers=[
        ("mass", lambda t, s_, f: abs(s_.mass())),
        ("real", lambda t, s_, f: s_.reality_defect()),
        ("incomp", lambda t, s_, f: f.incompressibility_defect()),
    ])
    scale = st.sobolev_norm(s, 0.0)
    assert out["mass"].max() < 1e-12 * scale
    assert out["real"].max() < 1e-12 * scale
    assert out["incomp"].max() < 1e-12 * scale


def test_split_transport_agrees_with_explicit():
    params = st.Params(gamma=1.0, iota=-3.0, nu=1e-2, kmax=1, L=8)
    s = st.random_state(params, seed=10, profile=st.SpectrumProfile(amplitude=1e-3))
    fin_e = itg.evolve(s, params, itg.RunConfig(dt=0.01, t_end=0.2))["_final"]
    fin_s = itg.evolve(s, params, itg.RunConfig(dt=0.01, t_end=0.2,
                                                transport="split"))["_final"]
    scale = np.abs(fin_e.coeffs).max()
    assert np.abs(fin_s.coeffs - fin_e.coeffs).max() < 2e-3 * scale


def test_norm_guard_trips():
    g0 = sph.SphField.from_lm(4, {(1, 0): 1.0})

    def bomb(t):
        return sph.SphField(4, 100.0 * np.exp(5 * t) * g0.coeffs)

    cfg = itg.RunConfig(dt=0.5, t_end=5.0, norm_guard=10.0)
    with pytest.raises(itg.NormExplosionError):
        itg.solve_single_mode(K_EZ, g0, 1e-3, cfg, forcing=bomb)


def test_solve_single_mode_forcing_scale():
    # d_t g - nu Lap g = |k| F with transport off: constant forcing at l = 0
    L = 4
    g0 = sph.SphField.zeros(L)
    F = sph.SphField.from_lm(L, {(0, 0): 1.0})
    cfg = itg.RunConfig(dt=0.01, t_end=1.0, terms=ops.TermFlags(free_transport=False))
    tr = itg.solve_single_mode(K_EZ, g0, 1e-2, cfg, forcing=lambda t: F)
    kabs = 2 * np.pi
    assert abs(tr.fields[-1][(0, 0)] - kabs * 1.0) < 1e-10  # l = 0 undamped: g = |k| t F
