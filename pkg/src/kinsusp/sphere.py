"""Spherical-harmonic engine on the unit sphere.

Fields are represented by complex coefficients in the orthonormal
spherical-harmonic basis

    Y_lm(theta, phi) = N_lm P_l^m(cos theta) e^{i m phi},
    N_lm = sqrt((2l+1)(l-m)! / (4 pi (l+m)!)),

with the Condon-Shortley phase folded into P_l^m.  Under this convention
Parseval holds exactly: ||f||^2_{L^2(S^2)} = sum |f_lm|^2.

The grid is Gauss-Legendre in colatitude (no node sits on a pole) times a
uniform longitude grid, so quadrature of band-limited integrands is exact
and gradient evaluation never divides by sin(theta) = 0.

Coefficients are stored in a rectangular array c[l, m + L], 0 <= l <= L,
|m| <= l; entries outside the triangle are kept at zero.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "SphGrid",
    "SphField",
    "TangentField",
    "grid_for_band",
    "synthesize",
    "analyze",
    "laplacian",
    "gradient",
    "grad_axis",
    "mul_cos_axis",
    "mul_cos_axis_batch",
    "divergence",
    "sphere_integral",
    "product",
    "tangent_gradient",
    "random_field",
]

_FOUR_PI = 4.0 * np.pi


class BandLimitError(ValueError):
    """Grid resolution does not support the requested band limit."""


# ---------------------------------------------------------------------------
# Legendre tables
# ---------------------------------------------------------------------------

def _legendre_table(L: int, mu: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre functions ptilde_lm(mu).

    Returns P with shape (L+1, 2L+1, n); P[l, m+L, i] is the theta-part of
    Y_lm at node i, including the sqrt((2l+1).../4pi) normalization and the
    Condon-Shortley phase.  Stable three-term recurrence, valid to high
    degree (hundreds) in float64.
    """
    n = mu.size
    s = np.sqrt(1.0 - mu**2)
    P = np.zeros((L + 1, 2 * L + 1, n))
    pmm = np.full(n, np.sqrt(1.0 / _FOUR_PI))
    for m in range(L + 1):
        col = L + m
        P[m, col] = pmm
        if m + 1 <= L:
            P[m + 1, col] = np.sqrt(2 * m + 3.0) * mu * pmm
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, col] = a * (mu * P[l - 1, col] - b * P[l - 2, col])
        pmm = -np.sqrt((2 * m + 3.0) / (2 * m + 2.0)) * s * pmm
    for m in range(1, L + 1):
        P[:, L - m] = (-1.0) ** m * P[:, L + m]
    return P


def _dtheta_table(L: int, P: np.ndarray) -> np.ndarray:
    """d/dtheta of ptilde_lm via the ladder identity (pole-regular)."""
    DP = np.zeros_like(P)
    ls = np.arange(L + 1)[:, None]
    ms = np.arange(-L, L + 1)[None, :]
    cp = np.sqrt(np.maximum((ls - ms) * (ls + ms + 1.0), 0.0))
    cm = np.sqrt(np.maximum((ls + ms) * (ls - ms + 1.0), 0.0))
    DP[:, :-1] += 0.5 * cp[:, :-1, None] * P[:, 1:]
    DP[:, 1:] -= 0.5 * cm[:, 1:, None] * P[:, :-1]
    return DP


def _msin_table(L: int, P: np.ndarray, sin_theta: np.ndarray) -> np.ndarray:
    """(m / sin(theta)) ptilde_lm; finite because ptilde ~ sin^|m|."""
    ms = np.arange(-L, L + 1)[None, :, None].astype(float)
    return ms * P / sin_theta[None, None, :]


@dataclass
class _Basis:
    P: np.ndarray
    _DP: np.ndarray | None = None
    _MP: np.ndarray | None = None
    _sin: np.ndarray | None = None

    @property
    def DP(self) -> np.ndarray:
        if self._DP is None:
            self._DP = _dtheta_table(self.P.shape[0] - 1, self.P)
        return self._DP

    @property
    def MP(self) -> np.ndarray:
        if self._MP is None:
            self._MP = _msin_table(self.P.shape[0] - 1, self.P, self._sin)
        return self._MP


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

class SphGrid:
    """Gauss-Legendre (colatitude) x uniform (longitude) quadrature grid.

    ``weights`` has shape (n_theta, 1) and broadcasts against node value
    arrays; the weights sum to 4 pi.
    """

    def __init__(self, n_theta: int, n_phi: int):
        if n_theta < 1 or n_phi < 1:
            raise ValueError("grid sizes must be positive")
        mu, w = leggauss(n_theta)
        order = np.argsort(-mu)  # north (mu=1) to south
        self.n_theta = n_theta
        self.n_phi = n_phi
        self.mu = mu[order]
        self.wtheta = w[order]
        self.theta = np.arccos(self.mu)
        self.sin_theta = np.sqrt(1.0 - self.mu**2)
        self.phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        self.weights = (self.wtheta * (2.0 * np.pi / n_phi))[:, None]
        self._bases: dict[int, _Basis] = {}
        self._frames: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        self._lock = threading.Lock()

    # -- capability checks --------------------------------------------------
    def supports_analysis(self, band: int, content_degree: int | None = None) -> bool:
        """Whether analysis at ``band`` is exact for data of the given degree."""
        deg = band if content_degree is None else content_degree
        return (2 * self.n_theta - 1 >= band + deg) and (self.n_phi >= band + deg + 1)

    def require_band(self, band: int, content_degree: int | None = None) -> None:
        if not self.supports_analysis(band, content_degree):
            raise BandLimitError(
                f"grid ({self.n_theta} x {self.n_phi}) cannot resolve band {band}"
                + ("" if content_degree is None else f" with content degree {content_degree}")
            )

    def basis(self, L: int) -> _Basis:
        with self._lock:
            b = self._bases.get(L)
            if b is None:
                b = _Basis(_legendre_table(L, self.mu), _sin=self.sin_theta)
                self._bases[L] = b
            return b

    # -- embedded geometry ---------------------------------------------------
    @property
    def frames(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(p, e_theta, e_phi) as (n_theta, n_phi, 3) arrays."""
        if self._frames is None:
            one = np.ones((self.n_theta, self.n_phi))
            st = self.sin_theta[:, None] * one
            ct = self.mu[:, None] * one
            cp = np.cos(self.phi)[None, :] * one
            sp = np.sin(self.phi)[None, :] * one
            p = np.stack([st * cp, st * sp, ct], axis=-1)
            e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
            e_p = np.stack([-sp, cp, np.zeros_like(one)], axis=-1)
            self._frames = (p, e_t, e_p)
        return self._frames

    def integrate(self, values: np.ndarray) -> complex:
        """Quadrature of node values over the sphere."""
        return complex(np.sum(self.weights * values))

    def __repr__(self) -> str:  # pragma: no cover
        return f"SphGrid(n_theta={self.n_theta}, n_phi={self.n_phi})"


_GRID_CACHE: dict[tuple[int, int], SphGrid] = {}
_GRID_LOCK = threading.Lock()


def _cached_grid(n_theta: int, n_phi: int) -> SphGrid:
    with _GRID_LOCK:
        g = _GRID_CACHE.get((n_theta, n_phi))
        if g is None:
            g = SphGrid(n_theta, n_phi)
            _GRID_CACHE[(n_theta, n_phi)] = g
        return g


def grid_for_band(L: int, phi_pad: int = 0) -> SphGrid:
    """Grid sized for a declared band limit L.

    Colatitude count is 2L+1, which integrates all spherical harmonics up to
    degree 2L exactly (with margin); longitude count is 2L+2 (+ optional pad).
    """
    return _cached_grid(2 * L + 1, 2 * L + 2 + phi_pad)


def product_grid(deg_a: int, deg_b: int, out_band: int) -> SphGrid:
    """Grid on which a (deg_a x deg_b) pointwise product analyzes exactly at out_band."""
    total = deg_a + deg_b + out_band
    n_theta = total // 2 + 2
    n_phi = total + 2 + (total % 2)  # even, >= total+1
    return _cached_grid(n_theta, n_phi)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass
class SphField:
    """Band-limited complex function on the sphere (coefficient carrier)."""

    L: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.L + 1, 2 * self.L + 1)
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    @classmethod
    def zeros(cls, L: int) -> "SphField":
        return cls(L, np.zeros((L + 1, 2 * L + 1), dtype=complex))

    @classmethod
    def from_lm(cls, L: int, entries: dict[tuple[int, int], complex]) -> "SphField":
        f = cls.zeros(L)
        for (l, m), v in entries.items():
            if abs(m) > l or l > L:
                raise ValueError(f"(l, m) = ({l}, {m}) outside band limit {L}")
            f.coeffs[l, m + L] = v
        return f

    def __getitem__(self, lm: tuple[int, int]) -> complex:
        l, m = lm
        return self.coeffs[l, m + self.L]

    def copy(self) -> "SphField":
        return SphField(self.L, self.coeffs.copy())

    def norm(self) -> float:
        """L^2(S^2) norm via Parseval."""
        return float(np.linalg.norm(self.coeffs))

    def pad_to(self, L: int) -> "SphField":
        if L < self.L:
            raise ValueError("pad_to target below current band limit")
        out = SphField.zeros(L)
        d = L - self.L
        out.coeffs[: self.L + 1, d : d + 2 * self.L + 1] = self.coeffs
        return out

    def truncate(self, L: int) -> "SphField":
        if L >= self.L:
            return self.pad_to(L) if L > self.L else self.copy()
        d = self.L - L
        return SphField(L, self.coeffs[: L + 1, d : d + 2 * L + 1].copy())

    def __add__(self, other: "SphField") -> "SphField":
        return SphField(self.L, self.coeffs + other.coeffs)

    def __sub__(self, other: "SphField") -> "SphField":
        return SphField(self.L, self.coeffs - other.coeffs)

    def __mul__(self, a: complex) -> "SphField":
        return SphField(self.L, self.coeffs * a)

    __rmul__ = __mul__


@dataclass
class TangentField:
    """Tangent vector field in the local (e_theta, e_phi) frame per node.

    The radial component is zero by construction; components may be complex
    (complex scalar amplitudes times real tangent directions).
    """

    grid: SphGrid
    comp_theta: np.ndarray = field(repr=False)
    comp_phi: np.ndarray = field(repr=False)

    def norm2(self, weight: np.ndarray | None = None) -> float:
        """Quadrature of |F|^2 (optionally times a nonnegative node weight)."""
        dens = np.abs(self.comp_theta) ** 2 + np.abs(self.comp_phi) ** 2
        if weight is not None:
            dens = dens * weight
        return float(np.sum(self.grid.weights * dens).real)

    def inner(self, other: "TangentField", weight: np.ndarray | None = None) -> complex:
        dens = self.comp_theta * np.conj(other.comp_theta) + self.comp_phi * np.conj(other.comp_phi)
        if weight is not None:
            dens = dens * weight
        return complex(np.sum(self.grid.weights * dens))

    def scale(self, values: np.ndarray | complex) -> "TangentField":
        return TangentField(self.grid, self.comp_theta * values, self.comp_phi * values)

    def __add__(self, other: "TangentField") -> "TangentField":
        return TangentField(self.grid, self.comp_theta + other.comp_theta,
                            self.comp_phi + other.comp_phi)

    def cartesian(self) -> np.ndarray:
        """Components in the ambient frame, shape (n_theta, n_phi, 3)."""
        _, e_t, e_p = self.grid.frames
        return self.comp_theta[..., None] * e_t + self.comp_phi[..., None] * e_p


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def _synth_from_table(coeffs: np.ndarray, table: np.ndarray, grid: SphGrid) -> np.ndarray:
    """Sum_{lm} c_lm T_lm(mu_i) e^{im phi_j} for an arbitrary theta-table."""
    L = table.shape[0] - 1
    if grid.n_phi < 2 * L + 1:
        raise BandLimitError(f"n_phi = {grid.n_phi} cannot carry m up to {L}")
    g = np.einsum("...lm,lmi->...im", coeffs, table)  # (..., n_theta, 2L+1)
    shape = g.shape[:-1] + (grid.n_phi,)
    buf = np.zeros(shape, dtype=complex)
    buf[..., : L + 1] = g[..., L:]          # m = 0..L -> bins 0..L
    buf[..., grid.n_phi - L :] = g[..., :L]  # m = -L..-1 -> bins n_phi-L..
    return np.fft.ifft(buf, axis=-1) * grid.n_phi


def _phi_spectra(values: np.ndarray, grid: SphGrid, L: int) -> np.ndarray:
    """FFT over phi and extraction of bins m = -L..L, scaled by 2 pi / n_phi."""
    F = np.fft.fft(values, axis=-1) * (2.0 * np.pi / grid.n_phi)
    neg = F[..., grid.n_phi - L :]
    pos = F[..., : L + 1]
    return np.concatenate([neg, pos], axis=-1)  # (..., n_theta, 2L+1) ordered m=-L..L


def synthesize(f: SphField, grid: SphGrid) -> np.ndarray:
    """Evaluate a field on grid nodes; returns complex (n_theta, n_phi)."""
    grid.require_band(f.L, 0)
    return _synth_from_table(f.coeffs, grid.basis(f.L).P, grid)


def analyze(values: np.ndarray, grid: SphGrid, L: int) -> SphField:
    """Project node values onto Y_lm up to degree L by quadrature.

    Exact left inverse of ``synthesize`` for band-limited data on a grid
    satisfying ``supports_analysis(L)``.
    """
    grid.require_band(L)
    if values.shape != (grid.n_theta, grid.n_phi):
        raise ValueError("value array does not match grid shape")
    Fm = _phi_spectra(values, grid, L)
    c = np.einsum("im,lmi,i->lm", Fm, grid.basis(L).P, grid.wtheta)
    return SphField(L, np.ascontiguousarray(c))


def laplacian(f: SphField) -> SphField:
    """Laplace-Beltrami operator: multiplies degree l by -l(l+1)."""
    ls = np.arange(f.L + 1)
    return SphField(f.L, f.coeffs * (-(ls * (ls + 1.0)))[:, None])


def gradient(f: SphField, grid: SphGrid) -> TangentField:
    """Covariant surface gradient evaluated on grid nodes."""
    grid.require_band(f.L, 0)
    b = grid.basis(f.L)
    ct = _synth_from_table(f.coeffs, b.DP, grid)
    cp = 1j * _synth_from_table(f.coeffs, b.MP, grid)
    return TangentField(grid, ct, cp)


def grad_axis(axis: np.ndarray, grid: SphGrid) -> TangentField:
    """Gradient of p -> p . axis, i.e. the tangential projection of the axis."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
        raise ValueError("axis must be a unit vector")
    _, e_t, e_p = grid.frames
    return TangentField(grid, (e_t @ axis).astype(complex), (e_p @ axis).astype(complex))


def divergence(F: TangentField, L: int) -> SphField:
    """Weak (Galerkin) surface divergence: d_lm = -integral F . grad conj(Y_lm)."""
    grid = F.grid
    grid.require_band(L)
    b = grid.basis(L)
    Ft = _phi_spectra(F.comp_theta, grid, L)
    Fp = _phi_spectra(F.comp_phi, grid, L)
    d = -np.einsum("im,lmi,i->lm", Ft, b.DP, grid.wtheta) \
        + 1j * np.einsum("im,lmi,i->lm", Fp, b.MP, grid.wtheta)
    return SphField(L, np.ascontiguousarray(d))


def sphere_integral(f: SphField) -> complex:
    """Integral over the sphere: sqrt(4 pi) times the (0, 0) coefficient."""
    return complex(np.sqrt(_FOUR_PI) * f.coeffs[0, f.L])


# ---------------------------------------------------------------------------
# Multiplication by the linear coordinate p . axis (spectral ladder)
# ---------------------------------------------------------------------------

_LADDER_CACHE: dict[int, tuple[np.ndarray, ...]] = {}


def _ladder_tables(L: int) -> tuple[np.ndarray, ...]:
    t = _LADDER_CACHE.get(L)
    if t is not None:
        return t
    ls = np.arange(L + 1)[:, None].astype(float)
    ms = np.arange(-L, L + 1)[None, :].astype(float)
    valid = np.abs(ms) <= ls
    with np.errstate(invalid="ignore", divide="ignore"):
        Az = np.sqrt(((ls + 1) ** 2 - ms**2) / ((2 * ls + 1) * (2 * ls + 3)))
        Cpp = -np.sqrt((ls + ms + 1) * (ls + ms + 2) / ((2 * ls + 1) * (2 * ls + 3)))
        Cpm = np.sqrt(np.maximum((ls - ms) * (ls - ms - 1), 0.0)
                      / np.maximum((2 * ls - 1) * (2 * ls + 1), 1.0))
        Cmp = np.sqrt((ls - ms + 1) * (ls - ms + 2) / ((2 * ls + 1) * (2 * ls + 3)))
        Cmm = -np.sqrt(np.maximum((ls + ms) * (ls + ms - 1), 0.0)
                       / np.maximum((2 * ls - 1) * (2 * ls + 1), 1.0))
    tables = tuple(np.where(valid, a, 0.0) for a in (Az, Cpp, Cpm, Cmp, Cmm))
    _LADDER_CACHE[L] = tables
    return tables


def mul_cos_axis_batch(coeffs: np.ndarray, axes: np.ndarray, L_out: int) -> np.ndarray:
    """Coefficients of (p . axis) f for a batch of fields and (unit) axes.

    ``coeffs`` has shape (..., L+1, 2L+1) and ``axes`` (..., 3); the result is
    (..., L_out+1, 2L_out+1).  Exact: degree-1 times degree-L content lands in
    degrees {l-1, l+1} only.  Passing L_out = L truncates (Galerkin).
    """
    L = coeffs.shape[-2] - 1
    Az, Cpp, Cpm, Cmp, Cmm = _ladder_tables(L)
    axes = np.asarray(axes, dtype=complex)
    wz = axes[..., 2, None, None]
    wp = 0.5 * (axes[..., 0, None, None] - 1j * axes[..., 1, None, None])
    wm = 0.5 * (axes[..., 0, None, None] + 1j * axes[..., 1, None, None])

    out = np.zeros(coeffs.shape[:-2] + (L_out + 1, 2 * L_out + 1), dtype=complex)
    d = L_out - L  # column offset for equal m

    def add(src_l0, src_l1, dl, dm, table, weight):
        """out[l+dl, m+dm] += w * table[l, m] * c[l, m] over source degrees [src_l0, src_l1)."""
        dst_l0, dst_l1 = src_l0 + dl, src_l1 + dl
        if dst_l1 > L_out + 1:
            cut = dst_l1 - (L_out + 1)
            dst_l1 -= cut
            src_l1 -= cut
        if dst_l0 < 0:
            src_l0 -= dst_l0
            dst_l0 = 0
        if src_l1 <= src_l0:
            return
        c0 = d + dm  # destination column of source column 0
        s0 = max(0, -c0)
        s1 = min(2 * L + 1, 2 * L_out + 1 - c0)
        if s1 <= s0:
            return
        out[..., dst_l0:dst_l1, c0 + s0 : c0 + s1] += (
            weight * table[src_l0:src_l1, s0:s1] * coeffs[..., src_l0:src_l1, s0:s1]
        )

    # z-ladder: up (l -> l+1 with Az[l, m]) and down (l -> l-1 with Az[l-1, m])
    add(0, L + 1, +1, 0, Az, wz)
    az_down = np.vstack([np.zeros((1, 2 * L + 1)), Az[:L]])  # row l holds Az[l-1]
    add(1, L + 1, -1, 0, az_down, wz)
    # (x + iy): m -> m+1
    add(0, L + 1, +1, +1, Cpp, wp)
    add(1, L + 1, -1, +1, Cpm, wp)
    # (x - iy): m -> m-1
    add(0, L + 1, +1, -1, Cmp, wm)
    add(1, L + 1, -1, -1, Cmm, wm)
    return out


def mul_cos_axis(f: SphField, axis: np.ndarray) -> SphField:
    """Coefficients of (p . axis) f, band limit raised by one degree."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
        raise ValueError("axis must be a unit vector")
    return SphField(f.L + 1, mul_cos_axis_batch(f.coeffs, axis, f.L + 1))


# ---------------------------------------------------------------------------
# Pointwise products and second derivatives
# ---------------------------------------------------------------------------

def product(f: SphField, g: SphField, L_out: int) -> SphField:
    """De-aliased pointwise product, analyzed at band L_out.

    Synthesized on a grid large enough that the quadratic product is
    integrated exactly (zero-padding in both directions); content beyond
    L_out is cleanly truncated.
    """
    grid = product_grid(f.L, g.L, L_out)
    vals = synthesize(f, grid) * synthesize(g, grid)
    return analyze(vals, grid, L_out)


def tangent_gradient(W: TangentField, band: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Covariant derivative of a tangent field via its ambient components.

    The three Cartesian components of a tangent field are smooth scalars on
    the sphere; for fields of the form (grad f) or f * grad(p.axis) they are
    band-limited, so analysis at ``band`` is exact.  Returns the frame
    components (H_tt, H_tp, H_pt, H_pp) of nabla W, first index = direction
    of differentiation, on W's grid.
    """
    grid = W.grid
    grid.require_band(band)
    cart = W.cartesian()
    _, e_t, e_p = grid.frames
    grads = [gradient(analyze(cart[..., i], grid, band), grid) for i in range(3)]
    H_tt = sum(grads[i].comp_theta * e_t[..., i] for i in range(3))
    H_tp = sum(grads[i].comp_theta * e_p[..., i] for i in range(3))
    H_pt = sum(grads[i].comp_phi * e_t[..., i] for i in range(3))
    H_pp = sum(grads[i].comp_phi * e_p[..., i] for i in range(3))
    return H_tt, H_tp, H_pt, H_pp


def hessian_norm2(f: SphField, grid: SphGrid, weight: np.ndarray | None = None) -> float:
    """Quadrature of |nabla^2 f|^2 (optionally weighted), via tangent_gradient."""
    H = tangent_gradient(gradient(f, grid), f.L + 1)
    dens = sum(np.abs(h) ** 2 for h in H)
    if weight is not None:
        dens = dens * weight
    return float(np.sum(grid.weights * dens).real)


def rough_laplacian(W: TangentField, band: int) -> TangentField:
    """Rough (Bochner) Laplacian of a tangent field on S^2.

    Uses the identity Delta_rough W = P_tan[componentwise Delta of the
    Cartesian extension] + W, exact for band-limited components.
    """
    grid = W.grid
    grid.require_band(band)
    cart = W.cartesian()
    _, e_t, e_p = grid.frames
    lap = [synthesize(laplacian(analyze(cart[..., i], grid, band)), grid) for i in range(3)]
    lap = np.stack(lap, axis=-1)
    ct = np.einsum("ijc,ijc->ij", lap, e_t.astype(complex))
    cp = np.einsum("ijc,ijc->ij", lap, e_p.astype(complex))
    return TangentField(grid, ct + W.comp_theta, cp + W.comp_phi)


# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------

def random_field(L: int, rng: np.random.Generator, l_decay: float = 0.3) -> SphField:
    """Seeded random band-limited field with exp(-l_decay * l) amplitude decay."""
    c = rng.standard_normal((L + 1, 2 * L + 1)) + 1j * rng.standard_normal((L + 1, 2 * L + 1))
    ls = np.arange(L + 1)[:, None]
    ms = np.arange(-L, L + 1)[None, :]
    c *= np.exp(-l_decay * ls) * (np.abs(ms) <= ls)
    return SphField(L, c)
