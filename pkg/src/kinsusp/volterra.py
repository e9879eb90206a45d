"""Mode-by-mode linear stability: kernels, Volterra solves, resolvents.

Projecting the linearized model onto one wavevector k yields a scalar
memory equation for the transverse velocity amplitude,

    u(t) + int_0^t K(t - tau) u(tau) d tau = f(t),

where the 3x3 kernel acts on the plane orthogonal to k:

    K(t) u0 = (3 gamma iota / (4 pi |k|^2)) P_{k-perp}
              int (p . k) p  S_nu(t)[ (p . k)(p . u0) ] dp,

S_nu the single-mode advection-diffusion propagator (a pure phase when
nu = 0).  The kernel is linear in gamma * iota and obeys the exact
rescaling K_{k, nu}(t) = K_{khat, nu/|k|}(|k| t).

Growth of the Volterra solution changes sign exactly at the classical
threshold gamma |iota| / |k| = Gamma_c for pushers; pullers are
unconditionally stable.  The threshold constants are

    b_c : unique positive root of s(b) = 2 b^3 - 4b/3 + (b^4 - b^2) ln((1-b)/(1+b)),
    Gamma_c = 4 / (3 pi b_c^2 (1 - b_c^2)).

Discrete convolution is the trapezoid product-integration rule (second
order); Neumann resolvents are summed with left-nested powers so the
defining identity R + K * R = K holds to the series tail exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len
from scipy.optimize import brentq

from . import sphere as sph
from .integrator import RunConfig, solve_single_mode
from .operators import _pp_coeff_table
from .sphere import SphField

__all__ = [
    "VolterraKernel",
    "NeumannDivergenceError",
    "s_of_b",
    "critical_constants",
    "kernel_free",
    "kernel_diffusive",
    "convolve",
    "volterra_solve",
    "resolvent_neumann",
    "growth_scan",
    "fit_tail_rate",
]


class NeumannDivergenceError(RuntimeError):
    """Neumann series does not converge (discrete L1 norm >= 1); use volterra_solve."""


# ---------------------------------------------------------------------------
# Threshold constants
# ---------------------------------------------------------------------------

def s_of_b(b):
    """s(b) = 2 b^3 - 4b/3 + (b^4 - b^2) ln((1-b)/(1+b)) on 0 < b < 1.

    The logarithmic factor is evaluated with log1p so the product tends to
    its finite limit cleanly as b -> 1 (s(1-) = 2/3).
    """
    b = np.asarray(b, dtype=float)
    if np.any((b <= 0.0) | (b >= 1.0)):
        raise ValueError("s_of_b requires 0 < b < 1")
    return 2.0 * b**3 - (4.0 / 3.0) * b + (b**4 - b**2) * (np.log1p(-b) - np.log1p(b))


@lru_cache(maxsize=1)
def critical_constants() -> tuple[float, float]:
    """(b_c, Gamma_c): bisection root of s and the closed-form threshold."""
    b_c = float(brentq(lambda b: float(s_of_b(b)), 0.1, 0.99, xtol=1e-12, rtol=1e-15))
    gamma_c = 4.0 / (3.0 * np.pi * b_c**2 * (1.0 - b_c**2))
    return b_c, gamma_c


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass
class VolterraKernel:
    """Uniformly sampled memory kernel: samples[j] = K(j dt), (n, d, d) complex."""

    dt: float
    samples: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.shape[0])

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def scaled(self, factor: complex) -> "VolterraKernel":
        return VolterraKernel(self.dt, factor * self.samples, dict(self.meta))

    def l1_norm(self) -> float:
        """Trapezoid integral of the spectral matrix norm over the window."""
        norms = np.linalg.norm(self.samples, ord=2, axis=(1, 2))
        return float(np.trapezoid(norms, dx=self.dt))

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.samples, ord=2, axis=(1, 2)).max())


def _transverse_basis(khat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([1.0, 0.0, 0.0])
    if abs(khat @ a) > 0.9:
        a = np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ khat) * khat
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(khat, e1)
    return e1, e2


def kernel_free(k, gamma: float, iota: float, t_grid: np.ndarray,
                quad_L: int = 64, tol: float = 1e-8) -> VolterraKernel:
    """Diffusionless kernel by direct sphere quadrature of the phase integral.

    The integrand oscillates like exp(-i (p.k) t); the quadrature grid is
    sized for band ``quad_L`` and doubled automatically until two successive
    resolutions agree to ``tol`` at the final (worst) sample time.
    """
    k = np.asarray(k, dtype=float)
    kabs = float(np.linalg.norm(k))
    if kabs == 0:
        raise ValueError("k must be nonzero")
    t_grid = np.asarray(t_grid, dtype=float)
    pref = 3.0 * gamma * iota / (4.0 * np.pi * kabs**2)

    def assemble(L: int, times: np.ndarray) -> np.ndarray:
        grid = sph.grid_for_band(L)
        p = grid.frames[0].reshape(-1, 3)
        w = (grid.weights * np.ones((grid.n_theta, grid.n_phi))).ravel()
        pk = p @ k
        khat = k / kabs
        p_perp = p - np.outer(p @ khat, khat)
        # base[n, i*3+j] = w_n (p.k)^2 (P p)_i p_j
        base = ((w * pk**2)[:, None, None] * p_perp[:, :, None] * p[:, None, :]).reshape(-1, 9)
        out = np.empty((times.size, 9), dtype=complex)
        chunk = max(1, int(4e6 // max(p.shape[0], 1)))
        for s in range(0, times.size, chunk):
            ph = np.exp(-1j * np.outer(times[s : s + chunk], pk))
            out[s : s + chunk] = ph @ base
        return pref * out.reshape(times.size, 3, 3)

    # resolve the most oscillatory (latest) samples on successive grids until
    # they agree, then assemble the full window once at the settled resolution
    check = t_grid[-min(32, t_grid.size):]
    L = quad_L
    coarse = assemble(L, check)
    while True:
        fine = assemble(2 * L, check)
        err = float(np.abs(fine - coarse).max())
        scale = max(float(np.abs(fine).max()), 1e-300)
        if err <= tol * scale or L >= 512:
            break
        coarse, L = fine, 2 * L
    samples = assemble(L, t_grid)
    dt = float(t_grid[1] - t_grid[0]) if t_grid.size > 1 else 0.0
    return VolterraKernel(dt, samples, {"k": k, "nu": 0.0, "gamma": gamma,
                                        "iota": iota, "quad_L": L})


def _moment_readout_table(k: np.ndarray, L: int) -> np.ndarray:
    """R[i, l, m] with int g (p.k)(p.khat-perp p)_i dp = sum_lm g_lm R[i, l, m]."""
    kabs = float(np.linalg.norm(k))
    khat = k / kabs
    T2 = _pp_coeff_table()  # coefficients of p_i p_j at band 2
    # (p.k) P p = sum_j k_j p_j (p_i - (p.khat) khat_i) -> contract p_a p_b tables
    M = np.einsum("j,ijlm->ilm", k, T2) - np.einsum("i,j,a,ajlm->ilm",
                                                    khat, k, khat, T2)
    # int Y_lm g * conj trick: int g f = sum g_lm conj(analyze(f))_lm for real f
    R = np.zeros((3, L + 1, 2 * L + 1), dtype=complex)
    R[:, :3, L - 2 : L + 3] = np.conj(M)
    return R


def kernel_diffusive(k, params, t_grid: np.ndarray,
                     cfg: RunConfig | None = None) -> VolterraKernel:
    """Kernel with rotational diffusion, via the single-mode solver.

    Two solver runs (one per transverse basis vector) supply the columns;
    the moment readout is spectral (degree <= 2 content only).
    """
    k = np.asarray(k, dtype=float)
    kabs = float(np.linalg.norm(k))
    if kabs == 0:
        raise ValueError("k must be nonzero")
    t_grid = np.asarray(t_grid, dtype=float)
    dt_target = t_grid[1] - t_grid[0]
    L = params.L
    khat = k / kabs
    e1, e2 = _transverse_basis(khat)
    pref = 3.0 * params.gamma * params.iota / (4.0 * np.pi * kabs**2)

    if cfg is None:
        sub = max(1, int(np.ceil(dt_target / (0.2 / kabs))))
        cfg = RunConfig(dt=dt_target / sub, t_end=float(t_grid[-1]), record_every=sub)
    readout = _moment_readout_table(k, L)
    T2 = _pp_coeff_table()

    cols = []
    for e in (e1, e2):
        c0 = SphField.zeros(L)
        mat = 0.5 * (np.outer(k, e) + np.outer(e, k))
        c0.coeffs[:3, L - 2 : L + 3] = np.einsum("ij,ijlm->lm", mat, T2)
        traj = solve_single_mode(k, c0, params.nu, cfg, record_fields=True)
        if traj.times.size != t_grid.size or abs(traj.times[-1] - t_grid[-1]) > 1e-9:
            raise ValueError("solver sampling does not match the requested t grid")
        col = np.array([np.einsum("ilm,lm->i", readout, f.coeffs) for f in traj.fields])
        cols.append(pref * col)

    samples = np.zeros((t_grid.size, 3, 3), dtype=complex)
    for e, col in zip((e1, e2), cols):
        samples += np.einsum("ti,j->tij", col, e)
    return VolterraKernel(float(dt_target), samples,
                          {"k": k, "nu": params.nu, "gamma": params.gamma,
                           "iota": params.iota, "L": L})


# ---------------------------------------------------------------------------
# Discrete convolution algebra (trapezoid product integration)
# ---------------------------------------------------------------------------

def convolve(A: np.ndarray, B: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid-rule convolution of sampled kernels.

    (A * B)_n = dt [ sum_{j=0}^{n} A_{n-j} B_j - (A_n B_0 + A_0 B_n)/2 ],
    computed with FFTs; supports (n, d, d) x (n, d, e) and (n, d) shapes.
    """
    n = A.shape[0]
    if B.shape[0] != n:
        raise ValueError("sample counts differ")
    B_mat = B if B.ndim == 3 else B[:, :, None]
    m = next_fast_len(2 * n - 1)
    FA = np.fft.fft(A, n=m, axis=0)
    FB = np.fft.fft(B_mat, n=m, axis=0)
    full = np.fft.ifft(np.einsum("tab,tbc->tac", FA, FB), axis=0)[:n]
    full -= 0.5 * (np.einsum("tab,bc->tac", A, B_mat[0])
                   + np.einsum("ab,tbc->tac", A[0], B_mat))
    out = dt * full
    return out if B.ndim == 3 else out[:, :, 0]


def volterra_solve(K: VolterraKernel, f: np.ndarray) -> np.ndarray:
    """Product-integration march for u + K * u = f (second order in dt).

    f has shape (n, d); raises when the implicit step matrix
    I + (dt/2) K(0) is singular (dt too large).
    """
    Ks = K.samples
    n, d = f.shape
    if Ks.shape[0] != n or Ks.shape[1] != d:
        raise ValueError("kernel and forcing shapes are incompatible")
    dt = K.dt
    lead = np.eye(d) + 0.5 * dt * Ks[0]
    try:
        lead_inv = np.linalg.inv(lead)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError(
            "I + (dt/2) K(0) is singular; reduce the sample spacing") from e
    u = np.zeros((n, d), dtype=complex)
    u[0] = f[0]
    for i in range(1, n):
        conv = 0.5 * Ks[i] @ u[0]
        if i > 1:
            hist = np.einsum("jab,jb->a", Ks[1:i][::-1], u[1:i])
            conv = conv + hist
        u[i] = lead_inv @ (f[i] - dt * conv)
    return u


def resolvent_neumann(K: VolterraKernel, j_max: int = 80,
                      tol: float = 1e-10) -> tuple[VolterraKernel, dict]:
    """Neumann-series resolvent R = sum_{j>=0} (-1)^j (K *)^j K.

    Converges when the discrete L1 norm of K is below one (high-|k| regime).
    Powers are nested on the left, so R + K * R - K telescopes to the series
    tail; the returned info reports that residual along with the term count.
    Raises NeumannDivergenceError when the series fails to converge.
    """
    dt = K.dt
    l1 = K.l1_norm()
    term = K.samples.copy()
    R = term.copy()
    n_terms = 1
    converged = False
    prev_tail = np.inf
    for j in range(1, j_max + 1):
        term = -convolve(K.samples, term, dt)
        R += term
        n_terms += 1
        tail = float(np.trapezoid(np.linalg.norm(term, ord=2, axis=(1, 2)), dx=dt))
        if tail < tol:
            converged = True
            break
        if tail > prev_tail and tail > max(1.0, l1):
            break
        prev_tail = tail
    if not converged:
        raise NeumannDivergenceError(
            f"Neumann series not converged after {n_terms} terms "
            f"(||K||_L1 = {l1:.3f}); use volterra_solve instead")
    resolvent = VolterraKernel(dt, R, dict(K.meta))
    residual = float(np.abs(R + convolve(K.samples, R, dt) - K.samples).max())
    info = {"converged": converged, "n_terms": n_terms, "residual": residual,
            "l1_norm_K": l1}
    return resolvent, info


# ---------------------------------------------------------------------------
# Growth-rate scans
# ---------------------------------------------------------------------------

def fit_tail_rate(t: np.ndarray, amp: np.ndarray, tail_fraction: float = 0.5,
                  n_bins: int = 60) -> tuple[float, float]:
    """Signed growth rate of an oscillating amplitude series.

    RMS-bins the series (averaging out the carrier oscillation), then fits
    log amplitude linearly over the trailing ``tail_fraction`` of the
    window.  Positive = growth, negative = decay.
    """
    t = np.asarray(t, dtype=float)
    amp = np.asarray(amp, dtype=float)
    m = (t.size // n_bins) * n_bins
    if m == 0:
        raise ValueError("series too short to bin")
    tb = t[:m].reshape(n_bins, -1).mean(axis=1)
    ab = np.sqrt((amp[:m] ** 2).reshape(n_bins, -1).mean(axis=1))
    t0 = t[0] + (1.0 - tail_fraction) * (t[m - 1] - t[0])
    sel = tb >= t0
    ab = np.maximum(ab, 1e-300)
    A = np.vstack([tb[sel], np.ones(int(sel.sum()))]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ab[sel]), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(ab[sel])) ** 2)))
    return float(coef[0]), resid


def growth_scan(k, gamma: float, iotas, nu: float, horizon: float,
                dt: float | None = None, L: int = 32, quad_L: int = 64,
                tail_fraction: float = 0.5, refine_crossing: bool = True,
                n_workers: int = 1) -> dict:
    """Fitted tail rate lambda(iota) of the Volterra solution per dipole strength.

    The kernel is computed once at unit gamma * iota (it is exactly linear
    in that product) and rescaled per scan point; the forcing is the
    kernel's own response to a unit transverse impulse, f = K(.) e.  Returns
    per-point rates and, if a sign change is bracketed, the interpolated
    zero crossing iota*, refined by bisection.
    """
    k = np.asarray(k, dtype=float)
    kabs = float(np.linalg.norm(k))
    if dt is None:
        dt = 0.02 / kabs
    n = int(round(horizon / dt)) + 1
    t_grid = dt * np.arange(n)
    if nu == 0.0:
        base = kernel_free(k, 1.0, 1.0, t_grid, quad_L=quad_L)
    else:
        from .state import Params
        base = kernel_diffusive(k, Params(gamma=1.0, iota=1.0, nu=nu, kmax=1, L=L), t_grid)
    khat = k / kabs
    e1, _ = _transverse_basis(khat)

    def rate_for(iota: float) -> tuple[float, float]:
        Ki = base.scaled(gamma * iota)
        f = np.einsum("tij,j->ti", Ki.samples, e1)
        u = volterra_solve(Ki, f)
        amp = np.linalg.norm(u, axis=1)
        return fit_tail_rate(t_grid, amp, tail_fraction=tail_fraction)

    iotas = np.asarray(iotas, dtype=float)
    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            results = list(ex.map(rate_for, iotas))
    else:
        results = [rate_for(i) for i in iotas]
    lambdas = np.array([r[0] for r in results])
    resids = np.array([r[1] for r in results])

    crossing = None
    refined_points: list[tuple[float, float]] = []
    order = np.argsort(np.abs(iotas))
    io, lo = iotas[order], lambdas[order]
    for i in range(len(io) - 1):
        if lo[i] < 0 <= lo[i + 1] or lo[i] >= 0 > lo[i + 1]:
            a, b = io[i], io[i + 1]
            fa = lo[i]
            if refine_crossing:
                for _ in range(12):
                    mid = 0.5 * (a + b)
                    fm = rate_for(mid)[0]
                    refined_points.append((float(mid), float(fm)))
                    if (fa < 0) == (fm < 0):
                        a, fa = mid, fm
                    else:
                        b = mid
                crossing = 0.5 * (a + b)
            else:
                crossing = a + (b - a) * (0.0 - lo[i]) / (lo[i + 1] - lo[i])
            break
    return {"iotas": iotas, "lambdas": lambdas, "fit_residuals": resids,
            "crossing": crossing, "refined_points": refined_points,
            "kernel_meta": dict(base.meta)}
