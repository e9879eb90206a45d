"""Hypocoercivity and vector-field diagnostics for single-mode dynamics.

Provides the time-weight schedule (a, b, c) and vector-field coefficients
(alpha, beta) on the rescaled clock h = sqrt(nu |k|) t, the weighted
energy / dissipation functionals with optional orientation cutoffs, the
mixing integrals V_k, an audit of the per-mode energy inequality along
recorded trajectories, and least-squares decay-rate fits.

All functionals are evaluated by quadrature on a Gauss-Legendre grid; the
cutoffs are smooth profiles of p . khat and never enter any spectral
analysis, so no de-aliasing is required for them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import sphere as sph
from .sphere import SphField, SphGrid, TangentField

__all__ = [
    "HypoSchedule",
    "CutoffFamily",
    "rescaled_time",
    "vector_field_J",
    "energy_E",
    "dissipation_D",
    "mixing_V",
    "lemma_audit",
    "lemma22_check",
    "fit_decay",
    "check_interpolation",
    "diagnostic_grid",
]


def _kabs(k) -> float:
    k = np.asarray(k, dtype=float)
    return float(np.linalg.norm(k)) if k.ndim else float(abs(k))


def rescaled_time(t, k, nu: float):
    """Good time scale h = sqrt(nu |k|) t for mode k at diffusivity nu."""
    return np.sqrt(nu * _kabs(k)) * np.asarray(t)


@dataclass(frozen=True)
class HypoSchedule:
    """Weight schedule a, b, c and vector-field coefficients alpha, beta.

    a(h) = A min(h, 1), b(h) = B min(h^2, 1), c(h) = C min(h^3, 1) with
    A = B^{2/3} and C = 100 B^2 / A, which gives b^2 = a c / 100 < a c / 2
    identically (coercivity of the energy form).  alpha(0) = 1, beta(0) = 0,
    and |beta|^2 tracks b up to constants.
    """

    B: float = 0.01

    @property
    def A(self) -> float:
        return self.B ** (2.0 / 3.0)

    @property
    def C(self) -> float:
        return 100.0 * self.B**2 / self.A

    def a(self, h):
        return self.A * np.minimum(h, 1.0)

    def b(self, h):
        return self.B * np.minimum(np.asarray(h) ** 2, 1.0)

    def c(self, h):
        return self.C * np.minimum(np.asarray(h) ** 3, 1.0)

    def da(self, h):
        return self.A * (np.asarray(h) < 1.0)

    def db(self, h):
        h = np.asarray(h)
        return self.B * 2.0 * h * (h < 1.0)

    def dc(self, h):
        h = np.asarray(h)
        return self.C * 3.0 * h**2 * (h < 1.0)

    def alpha(self, h):
        return 0.5 * (1.0 + np.exp(-2.0 * np.asarray(h)) * np.exp(2j * np.asarray(h)))

    def beta(self, h):
        return (1.0 + 1j) / 4.0 * (1.0 - np.exp(-2.0 * np.asarray(h)) * np.exp(2j * np.asarray(h)))


# ---------------------------------------------------------------------------
# Cutoffs
# ---------------------------------------------------------------------------

def _smoothstep(u):
    """C^2 quintic smoothstep: 0 at u<=0, 1 at u>=1, vanishing 1st/2nd derivatives."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _smoothstep_d(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * u**2 * (1.0 - u) ** 2, 0.0)


class CutoffFamily:
    """Smooth orientation cutoffs localized away from the pole p = -khat.

    chi(x) is 0 for x <= -1/2 and 1 for x >= 0 (x = p . khat), with a C^2
    polynomial transition; chi_tilde is 1 on supp(chi) and still vanishes
    near the south pole; the mirror family swaps the roles of the poles.
    The pointwise domination |chi| + |grad chi| <= C chi_tilde holds with a
    recorded constant.
    """

    def __init__(self, axis: np.ndarray, grid: SphGrid):
        self.axis = np.asarray(axis, dtype=float)
        self.grid = grid
        p = grid.frames[0]
        self.x = p @ self.axis
        self.chi = self.profile(self.x)
        self.chi_tilde = self.companion(self.x)
        self.chi_south = self.profile(-self.x)
        self.chi_tilde_south = self.companion(-self.x)

    @staticmethod
    def profile(x):
        return _smoothstep(2.0 * np.asarray(x) + 1.0)

    @staticmethod
    def profile_d(x):
        return 2.0 * _smoothstep_d(2.0 * np.asarray(x) + 1.0)

    @staticmethod
    def companion(x):
        return _smoothstep(4.0 * (np.asarray(x) + 0.75))

    def grad_chi_norm(self) -> np.ndarray:
        """|grad chi| on the grid: |chi'(p.khat)| sqrt(1 - (p.khat)^2)."""
        return np.abs(self.profile_d(self.x)) * np.sqrt(np.maximum(1.0 - self.x**2, 0.0))

    def domination_constant(self) -> float:
        """Smallest C with |chi| + |grad chi| <= C chi_tilde on the grid."""
        num = np.abs(self.chi) + self.grad_chi_norm()
        mask = num > 0
        return float(np.max(num[mask] / self.chi_tilde[mask])) if mask.any() else 0.0


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------

def vector_field_J(g: SphField, k, nu: float, t: float, schedule: HypoSchedule,
                   grid: SphGrid, mirror: bool = False) -> TangentField:
    """J_k g = alpha grad g + i sqrt(|k|/nu) beta grad(p.khat) g on the grid.

    At t = 0 this is exactly grad g (alpha(0) = 1, beta(0) = 0).  The mirror
    variant reflects the axis khat -> -khat in the beta term, which yields
    the companion field adapted to the south pole.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    k = np.asarray(k, dtype=float)
    kabs = _kabs(k)
    khat = k / kabs
    h = rescaled_time(t, k, nu)
    al = schedule.alpha(h)
    be = schedule.beta(h)
    G = sph.grad_axis(-khat if mirror else khat, grid)
    gvals = sph.synthesize(g, grid)
    grad = sph.gradient(g, grid)
    coef = 1j * np.sqrt(kabs / nu) * be
    return TangentField(grid,
                        al * grad.comp_theta + coef * G.comp_theta * gvals,
                        al * grad.comp_phi + coef * G.comp_phi * gvals)


# ---------------------------------------------------------------------------
# Energy and dissipation functionals
# ---------------------------------------------------------------------------

def diagnostic_grid(L: int) -> SphGrid:
    """Grid used by the functionals: phi-padded so second derivatives of
    band-L fields (content L+2) analyze exactly."""
    return sph.grid_for_band(L + 2, phi_pad=6)


def _chi_sq(chi) -> np.ndarray | None:
    if chi is None:
        return None
    return np.asarray(chi) ** 2


def energy_E(Y: SphField, k, nu: float, t: float, schedule: HypoSchedule,
             grid: SphGrid, chi: np.ndarray | None = None) -> float:
    """Weighted hypocoercive energy of a mode at time t.

    ||Y chi||^2 + sqrt(nu/|k|) a ||grad Y chi||^2
    + 2 b Re< i grad(p.khat) Y chi, grad Y chi >
    + sqrt(|k|/nu) c ||grad(p.khat) Y chi||^2, all by quadrature.
    """
    k = np.asarray(k, dtype=float)
    kabs = _kabs(k)
    khat = k / kabs
    h = rescaled_time(t, k, nu)
    a, b, c = schedule.a(h), schedule.b(h), schedule.c(h)
    eps = np.sqrt(nu / kabs)
    w2 = _chi_sq(chi)

    vals = sph.synthesize(Y, grid)
    grad = sph.gradient(Y, grid)
    G = sph.grad_axis(khat, grid)
    GY = G.scale(vals)

    dens0 = np.abs(vals) ** 2
    if w2 is not None:
        dens0 = dens0 * w2
    term0 = float(np.sum(grid.weights * dens0).real)
    term_a = grad.norm2(w2)
    cross = GY.inner(grad, w2)
    term_c = GY.norm2(w2)
    return term0 + eps * a * term_a + 2.0 * b * float((1j * cross).real) + (c / eps) * term_c


def dissipation_D(Y: SphField, k, nu: float, t: float, schedule: HypoSchedule,
                  grid: SphGrid, chi: np.ndarray | None = None,
                  mode: str = "full") -> float:
    """Weighted dissipation functional.

    (nu/|k|) ||grad Y chi||^2 + (nu/|k|)^{3/2} a ||grad^2 Y chi||^2
    + b ||grad(p.khat) Y chi||^2 + (nu/|k|)^{1/2} c ||grad(grad(p.khat) Y) chi||^2.
    ``mode='reduced'`` omits the two second-derivative terms (a valid lower
    bound since both are nonnegative).
    """
    if mode not in ("full", "reduced"):
        raise ValueError("mode must be 'full' or 'reduced'")
    k = np.asarray(k, dtype=float)
    kabs = _kabs(k)
    khat = k / kabs
    h = rescaled_time(t, k, nu)
    a, b, c = schedule.a(h), schedule.b(h), schedule.c(h)
    eps = nu / kabs
    w2 = _chi_sq(chi)

    grad = sph.gradient(Y, grid)
    G = sph.grad_axis(khat, grid)
    vals = sph.synthesize(Y, grid)
    GY = G.scale(vals)

    out = eps * grad.norm2(w2) + b * GY.norm2(w2)
    if mode == "full":
        H = sph.tangent_gradient(grad, Y.L + 1)
        dens_h = sum(np.abs(x) ** 2 for x in H)
        HG = sph.tangent_gradient(GY, Y.L + 2)
        dens_g = sum(np.abs(x) ** 2 for x in HG)
        if w2 is not None:
            dens_h = dens_h * w2
            dens_g = dens_g * w2
        out += eps**1.5 * a * float(np.sum(grid.weights * dens_h).real)
        out += np.sqrt(eps) * c * float(np.sum(grid.weights * dens_g).real)
    return out


# ---------------------------------------------------------------------------
# Mixing integrals
# ---------------------------------------------------------------------------

def mixing_V(g: SphField, k, grid: SphGrid,
             Z: SphField | np.ndarray | None = None) -> np.ndarray:
    """V_k[g] = int g(p) Z(p) grad(p . khat) dp, a C^3 vector by quadrature.

    Z may be a scalar field (SphField), node values, or None (Z = 1).
    """
    k = np.asarray(k, dtype=float)
    khat = k / _kabs(k)
    gvals = sph.synthesize(g, grid)
    if Z is None:
        zvals = 1.0
    elif isinstance(Z, SphField):
        zvals = sph.synthesize(Z, grid)
    else:
        zvals = np.asarray(Z)
    G = sph.grad_axis(khat, grid).cartesian()
    dens = (gvals * zvals)[..., None] * G
    return np.sum(grid.weights[..., None] * dens, axis=(0, 1))


# ---------------------------------------------------------------------------
# Energy-inequality audit along trajectories
# ---------------------------------------------------------------------------

def _functionals_shared(g: SphField, k_arr: np.ndarray, nu: float, t: float,
                        schedule: HypoSchedule, grid: SphGrid,
                        G: TangentField) -> tuple[float, float, float]:
    """(E, D_reduced, ||g||^2) sharing one synthesis and one gradient."""
    kabs = _kabs(k_arr)
    h = rescaled_time(t, k_arr, nu)
    a, b, c = schedule.a(h), schedule.b(h), schedule.c(h)
    eps = np.sqrt(nu / kabs)
    vals = sph.synthesize(g, grid)
    grad = sph.gradient(g, grid)
    GY = G.scale(vals)
    term0 = float(np.sum(grid.weights * np.abs(vals) ** 2).real)
    term_a = grad.norm2()
    cross = GY.inner(grad)
    term_c = GY.norm2()
    E = term0 + eps * a * term_a + 2.0 * b * float((1j * cross).real) + (c / eps) * term_c
    D = (nu / kabs) * term_a + b * term_c
    return E, D, g.norm() ** 2


def lemma_audit(times: np.ndarray, fields: Sequence[SphField], k, nu: float,
                schedule: HypoSchedule, grid: SphGrid,
                forcing_fields: Sequence[SphField] | None = None) -> dict[str, np.ndarray]:
    """Residuals of the per-mode energy inequality along a recorded run.

    For each interior sample (centered difference in time),
        r = dE/dt / 2 + |k| a sqrt(nu/|k|) ||g||^2 + (5/8) |k| D_reduced
            - |k| Re E(g, F);
    the inequality predicts r <= 0, so positive residuals beyond
    discretization slack indicate failure at the probed (nu, B).
    Returns the E, D_reduced, ||g||^2 series and the interior residuals.
    """
    k = np.asarray(k, dtype=float)
    kabs = _kabs(k)
    times = np.asarray(times)
    n = len(times)
    E = np.empty(n)
    D = np.empty(n)
    g2 = np.empty(n)
    cross = np.zeros(n)
    khat = k / kabs
    G = sph.grad_axis(khat, grid)
    for i, (t, g) in enumerate(zip(times, fields)):
        E[i], D[i], g2[i] = _functionals_shared(g, k, nu, t, schedule, grid, G)
        if forcing_fields is not None:
            cross[i] = _energy_pairing(g, forcing_fields[i], k, nu, t, schedule, grid)
    h = rescaled_time(times, k, nu)
    a = schedule.a(h)
    dEdt = np.empty(n - 2)
    for i in range(1, n - 1):
        dEdt[i - 1] = (E[i + 1] - E[i - 1]) / (times[i + 1] - times[i - 1])
    mid = slice(1, n - 1)
    resid = 0.5 * dEdt + kabs * a[mid] * np.sqrt(nu / kabs) * g2[mid] \
        + (5.0 / 8.0) * kabs * D[mid] - kabs * cross[mid]
    return {"t": times, "E": E, "D_reduced": D, "norm2": g2,
            "t_mid": times[mid], "residual": resid}


def lemma22_check(trajectory, schedule: HypoSchedule, grid: SphGrid | None = None,
                  forcing_fields: Sequence[SphField] | None = None) -> dict[str, np.ndarray]:
    """Convenience wrapper of :func:`lemma_audit` for a SingleModeTrajectory."""
    if grid is None:
        grid = diagnostic_grid(trajectory.fields[0].L)
    return lemma_audit(trajectory.times, trajectory.fields, trajectory.k,
                       trajectory.nu, schedule, grid, forcing_fields)


def _energy_pairing(Y: SphField, F: SphField, k, nu: float, t: float,
                    schedule: HypoSchedule, grid: SphGrid) -> float:
    """Re E(Y, F): the sesquilinear energy form pairing a mode with a forcing."""
    k = np.asarray(k, dtype=float)
    kabs = _kabs(k)
    khat = k / kabs
    h = rescaled_time(t, k, nu)
    a, b, c = schedule.a(h), schedule.b(h), schedule.c(h)
    eps = np.sqrt(nu / kabs)
    yv = sph.synthesize(Y, grid)
    fv = sph.synthesize(F, grid)
    gy = sph.gradient(Y, grid)
    gf = sph.gradient(F, grid)
    G = sph.grad_axis(khat, grid)
    t0 = np.sum(grid.weights * yv * np.conj(fv))
    ta = gy.inner(gf)
    tb = G.scale(yv).inner(gf) * 1j
    tb2 = gy.inner(G.scale(1j * fv))
    tc = G.scale(yv).inner(G.scale(fv))
    return float((t0 + eps * a * ta + b * (tb + tb2) + (c / eps) * tc).real)


# ---------------------------------------------------------------------------
# Decay fits and the interpolation inequality
# ---------------------------------------------------------------------------

def fit_decay(t: np.ndarray, y: np.ndarray, window: tuple[float, float] | None = None,
              model: str = "exponential") -> tuple[float, float]:
    """Least-squares decay fit on a time window.

    exponential: fits log y ~ const - rate * t and returns (rate, residual)
    with rate > 0 for decay; power: fits log y ~ const + p * log t and
    returns (p, residual) with the signed exponent p.  Requires at least 8
    strictly positive samples in the window.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if t.size < 8:
        raise ValueError(f"need >= 8 samples in the fit window, got {t.size}")
    if np.any(y <= 0):
        raise ValueError("decay fit requires strictly positive data")
    if model == "exponential":
        x = t
    elif model == "power":
        if np.any(t <= 0):
            raise ValueError("power fit requires t > 0")
        x = np.log(t)
    else:
        raise ValueError("model must be 'exponential' or 'power'")
    ly = np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    slope = float(coef[0])
    return (-slope if model == "exponential" else slope), resid


def check_interpolation(g: SphField, sigma: float, axis: np.ndarray,
                        grid: SphGrid) -> tuple[float, float]:
    """(lhs, rhs) of sqrt(sigma)||g||^2 <= (sigma/2)||grad g||^2 + 2||grad(p.e) g||^2."""
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    vals = sph.synthesize(g, grid)
    grad = sph.gradient(g, grid)
    G = sph.grad_axis(np.asarray(axis, dtype=float), grid)
    lhs = np.sqrt(sigma) * g.norm() ** 2
    rhs = 0.5 * sigma * grad.norm2() + 2.0 * G.scale(vals).norm2()
    return float(lhs), float(rhs)
