"""Volterra kernels, resolvents, and the stability threshold machinery."""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from kinsusp import state as st
from kinsusp import volterra as vt

K_EZ = 2 * np.pi * np.array([0.0, 0.0, 1.0])
KABS = 2 * np.pi


# ---------------------------------------------------------------------------
# threshold constants
# ---------------------------------------------------------------------------

def test_s_of_b_signs():
    assert vt.s_of_b(0.1) < 0.0     # -(4/3) b dominates for small b
    assert vt.s_of_b(0.99) > 0.0    # limit s(1-) = 2/3
    assert abs(vt.s_of_b(0.999999) - 2.0 / 3.0) < 1e-3


def test_s_of_b_domain():
    with pytest.raises(ValueError):
        vt.s_of_b(0.0)
    with pytest.raises(ValueError):
        vt.s_of_b(1.0)


def test_critical_constants():
    b_c, gamma_c = vt.critical_constants()
    assert abs(b_c - 0.623) < 1e-3
    assert abs(vt.s_of_b(b_c)) < 1e-9
    assert abs(gamma_c - 4.0 / (3.0 * np.pi * b_c**2 * (1 - b_c**2))) < 1e-14


def test_s_single_sign_change():
    bs = np.arange(0.1, 0.99, 1e-3)
    signs = np.sign(vt.s_of_b(bs))
    changes = np.sum(np.abs(np.diff(signs)) > 0)
    assert changes == 1


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _scalar_oracle(ts, gi, kabs=KABS, n=400):
    """1D Gauss-Legendre oracle: kappa(t) = (3 gi / 4) int mu^2(1-mu^2) e^{-i mu |k| t} dmu."""
    nodes, wts = leggauss(n)
    ph = np.exp(-1j * np.outer(kabs * np.asarray(ts), nodes))
    return (3.0 * gi / 4.0) * (ph @ (wts * nodes**2 * (1 - nodes**2)))


def test_kernel_free_matches_scalar_oracle():
    ts = np.linspace(0.0, 3.0, 40)
    K = vt.kernel_free(K_EZ, 1.0, -2.0, ts)
    P = np.eye(3) - np.outer([0, 0, 1.0], [0, 0, 1.0])
    oracle = _scalar_oracle(ts, -2.0)
    assert np.abs(K.samples - oracle[:, None, None] * P).max() < 1e-12


def test_kernel_free_t0_static_moment():
    # K(0) = (3 gi / 4) * (4/15) * P (from int mu^2 (1 - mu^2) = 4/15... times 3/2?)
    ts = np.array([0.0])
    K = vt.kernel_free(K_EZ, 1.0, 1.0, ts)
    val = (3.0 / 4.0) * (2.0 / 3.0 - 2.0 / 5.0)
    assert abs(K.samples[0, 0, 0] - val) < 1e-13
    assert abs(K.samples[0, 1, 1] - val) < 1e-13


def test_kernel_annihilates_khat():
    ts = np.linspace(0.0, 5.0, 30)
    K = vt.kernel_free(K_EZ, 1.0, -1.0, ts)
    assert np.abs(K.samples @ np.array([0, 0, 1.0])).max() < 1e-10
    assert np.abs(np.array([0, 0, 1.0]) @ K.samples).max() < 1e-10


def test_kernel_transverse_projection_structure():
    ts = np.linspace(0.0, 5.0, 30)
    k = 2 * np.pi * np.array([1.0, 1.0, 0.0])
    K = vt.kernel_free(k, 1.0, -1.0, ts)
    khat = k / np.linalg.norm(k)
    P = np.eye(3) - np.outer(khat, khat)
    proj = np.einsum("ab,tbc,cd->tad", P, K.samples, P)
    assert np.abs(proj - K.samples).max() < 1e-10


def test_kernel_free_envelope():
    dt = 0.02 / KABS
    ts = dt * np.arange(int(100.0 / 0.02) + 1)
    K = vt.kernel_free(K_EZ, 1.0, -1.0, ts)
    tp = KABS * ts
    env = np.log(2.0 + tp) / (1.0 + tp) ** 2
    ratio = np.linalg.norm(K.samples, ord=2, axis=(1, 2)) / env
    C_early = ratio[tp <= 20.0].max()
    assert ratio.max() <= 1.2 * C_early


def test_kernel_isotropy_under_rotation():
    ts = np.linspace(0.0, 4.0, 25)
    K1 = vt.kernel_free(K_EZ, 1.0, -1.0, ts)
    k2 = 2 * np.pi * np.array([1.0, 0.0, 0.0])
    K2 = vt.kernel_free(k2, 1.0, -1.0, ts)
    R = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])  # e_z -> e_x
    rotated = np.einsum("ab,tbc,dc->tad", R, K1.samples, R)
    assert np.abs(rotated - K2.samples).max() < 1e-10


def test_kernel_scaling_law():
    # K_{k}(t) = K_{k/|k|-direction at 2|k|}(...): samples at |k| and 2|k| align
    ts = np.linspace(0.0, 2.0, 30)
    K2 = vt.kernel_free(2 * K_EZ, 1.0, -1.0, ts)
    K1 = vt.kernel_free(K_EZ, 1.0, -1.0, 2 * ts)
    assert np.abs(K2.samples - K1.samples).max() < 1e-10


def test_kernel_diffusive_continuity_to_free():
    # nu -> 0 at fixed t: matches the free kernel (tolerance dominated by
    # the physical diffusion acting on mixed filaments, O(nu |k|^2 t^3))
    params = st.Params(gamma=1.0, iota=-1.0, nu=1e-7, kmax=1, L=48)
    ts = np.arange(0.0, 5.0, 0.02)
    Kd = vt.kernel_diffusive(K_EZ, params, ts)
    Kf = vt.kernel_free(K_EZ, 1.0, -1.0, ts)
    rel = np.abs(Kd.samples - Kf.samples).max() / np.abs(Kf.samples).max()
    assert rel < 1e-3


def test_kernel_diffusive_gamma_iota_linearity():
    params1 = st.Params(gamma=1.0, iota=-1.0, nu=1e-2, kmax=1, L=16)
    params2 = st.Params(gamma=0.5, iota=-3.0, nu=1e-2, kmax=1, L=16)
    ts = np.arange(0.0, 2.0, 0.05)
    K1 = vt.kernel_diffusive(K_EZ, params1, ts)
    K2 = vt.kernel_diffusive(K_EZ, params2, ts)
    assert np.abs(K2.samples - 1.5 * K1.samples).max() < 1e-12


# ---------------------------------------------------------------------------
# volterra solve / resolvent
# ---------------------------------------------------------------------------

def test_volterra_zero_kernel():
    n = 50
    K = vt.VolterraKernel(0.01, np.zeros((n, 2, 2), dtype=complex))
    f = np.cos(np.arange(n))[:, None] * np.ones(2)
    u = vt.volterra_solve(K, f.astype(complex))
    assert np.abs(u - f).max() == 0.0


def test_volterra_scalar_analytic():
    lam, dt, n = 0.7, 1e-3, 2001
    K = vt.VolterraKernel(dt, np.full((n, 1, 1), lam, dtype=complex))
    u = vt.volterra_solve(K, np.ones((n, 1), dtype=complex))
    exact = np.exp(-lam * dt * np.arange(n))
    err = np.abs(u[:, 0] - exact).max()
    assert err < 10 * dt**2
    # self-convergence: halving dt quarters the error
    K2 = vt.VolterraKernel(dt / 2, np.full((2 * n - 1, 1, 1), lam, dtype=complex))
    u2 = vt.volterra_solve(K2, np.ones((2 * n - 1, 1), dtype=complex))
    err2 = np.abs(u2[:, 0] - np.exp(-lam * dt / 2 * np.arange(2 * n - 1))).max()
    assert 3.0 < err / err2 < 5.0


def test_resolvent_zero_kernel():
    n = 64
    K = vt.VolterraKernel(0.01, np.zeros((n, 1, 1), dtype=complex))
    R, info = vt.resolvent_neumann(K)
    assert np.abs(R.samples).max() == 0.0
    assert info["residual"] == 0.0


def test_resolvent_geometric_scalar():
    # scalar exponential kernel with L1 norm 1/2: series converges, identity holds
    dt, n = 1e-3, 2001
    K = vt.VolterraKernel(dt, (0.5 * np.exp(-dt * np.arange(n)))[:, None, None].astype(complex))
    assert K.l1_norm() < 1.0
    R, info = vt.resolvent_neumann(K, tol=1e-12)
    assert info["converged"]
    assert info["residual"] < 1e-11


def test_resolvent_agreement_with_march():
    dt, n = 2e-4, 5001
    K = vt.VolterraKernel(dt, (0.5 * np.exp(-dt * np.arange(n)))[:, None, None].astype(complex))
    R, _ = vt.resolvent_neumann(K, tol=1e-13)
    f = np.cos(0.8 * dt * np.arange(n))[:, None].astype(complex)
    u_march = vt.volterra_solve(K, f)
    u_res = f - vt.convolve(R.samples, f, dt)
    assert np.abs(u_march - u_res).max() < 1e-8


def test_resolvent_divergence_error():
    dt, n = 1e-2, 1001
    K = vt.VolterraKernel(dt, np.full((n, 1, 1), 2.0, dtype=complex))  # L1 = 20
    with pytest.raises(vt.NeumannDivergenceError):
        vt.resolvent_neumann(K, j_max=10)


def test_convolve_matches_direct():
    rng = np.random.default_rng(0)
    n, dt = 40, 0.1
    A = rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
    B = rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
    C = vt.convolve(A, B, dt)
    direct = np.zeros_like(C)
    for m in range(n):
        acc = np.zeros((2, 2), dtype=complex)
        for j in range(m + 1):
            w = 0.5 if j in (0, m) else 1.0
            acc += w * A[m - j] @ B[j]
        direct[m] = dt * acc
    assert np.abs(C - direct).max() < 1e-12


# ---------------------------------------------------------------------------
# growth scan (coarse, fast settings)
# ---------------------------------------------------------------------------

def test_growth_scan_signs():
    _, gamma_c = vt.critical_constants()
    base = gamma_c * KABS
    res = vt.growth_scan(K_EZ, 1.0, [-0.6 * base, -1.8 * base, 2.0 * base],
                         0.0, horizon=15.0, dt=0.01, refine_crossing=False)
    lam = dict(zip(np.round(res["iotas"] / base, 1), res["lambdas"]))
    assert lam[-0.6] < 0          # pusher below threshold decays
    assert lam[-1.8] > 0          # pusher above threshold grows
    assert lam[2.0] < 0           # puller stable
