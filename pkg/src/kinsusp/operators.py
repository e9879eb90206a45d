"""Right-hand-side operators of the kinetic model, term by term.

Each operator returns its signed contribution to d psi / dt:

    d_t psi = nu Lap_p psi                      (diffusion; handled by the integrator)
            - p . grad_x psi                    (free_transport)
            - u . grad_x psi                    (convection)
            + (3 gamma / 4 pi) (p x p) : E(u)   (jeffery_source)
            - div_p( P_{p-perp}[(gamma E + W) p] psi )   (jeffery_transport)

with u recovered from psi through the Stokes problem
-Lap u + grad q = div Sigma, div u = 0, Sigma = iota int psi p x p dp.
The pressure is eliminated by the transverse projection, mode by mode.

Quadratic terms (convection, Jeffery transport) are evaluated
pseudo-spectrally: modes are transformed to a zero-padded physical grid in
x (>= 3 kmax + 1 points per axis, so quadratic products are alias-free),
multiplied there, and transformed back.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sphere as sph
from .sphere import SphField, SphGrid, TangentField
from .state import FlowField, KineticState, conjugate_coeffs

__all__ = [
    "TermFlags",
    "stress",
    "stokes_solve",
    "free_transport",
    "convection",
    "jeffery_source",
    "jeffery_transport",
    "rhs_full",
    "compute_flow",
]


@dataclass(frozen=True)
class TermFlags:
    """Which right-hand-side terms participate (linearized vs full runs)."""

    free_transport: bool = True
    diffusion: bool = True
    stress_feedback: bool = True
    convection: bool = True
    jeffery_transport: bool = True

    @classmethod
    def linearized(cls) -> "TermFlags":
        return cls(convection=False, jeffery_transport=False)


# ---------------------------------------------------------------------------
# Second-moment tables: spectral coefficients of p_i p_j
# ---------------------------------------------------------------------------

_PP_TABLE: np.ndarray | None = None


def _pp_coeff_table() -> np.ndarray:
    """T2[i, j, l, m+2] = coefficients of the function p -> p_i p_j (band 2)."""
    global _PP_TABLE
    if _PP_TABLE is None:
        grid = sph.grid_for_band(3)
        p, _, _ = grid.frames
        T2 = np.zeros((3, 3, 3, 5), dtype=complex)
        for i in range(3):
            for j in range(3):
                T2[i, j] = sph.analyze(p[..., i] * p[..., j] + 0j, grid, 2).coeffs
        _PP_TABLE = T2
    return _PP_TABLE


def stress(state: KineticState, iota: float) -> np.ndarray:
    """Active stress Sigma_k = iota * int psi_k p x p dp, shape (n_stored, 3, 3).

    Only the degree <= 2 content of psi contributes; evaluated spectrally,
    using int Y_lm g = conj(analyze(g)_lm) for the real functions g = p_i p_j.
    """
    T2 = _pp_coeff_table()
    block = state.coeffs[:, :3, state.L - 2 : state.L + 3]
    return iota * np.einsum("nlm,ijlm->nij", block, np.conj(T2))


def stokes_solve(stress_mats: np.ndarray, lattice) -> FlowField:
    """Mode-wise Stokes inversion: u_k = |k|^{-2} P_{k-perp} (i Sigma_k k), u_0 = 0."""
    k = lattice.k_vec
    k2 = np.sum(k * k, axis=1)
    rhs = 1j * np.einsum("nij,nj->ni", stress_mats, k)
    khat = lattice.k_hat
    transverse = rhs - khat * np.einsum("ni,ni->n", rhs, khat)[:, None]
    safe = np.where(k2 > 0, k2, 1.0)
    u = transverse / safe[:, None]
    u[0] = 0.0
    return FlowField(lattice, u)


def compute_flow(state: KineticState, params) -> FlowField:
    return stokes_solve(stress(state, params.iota), state.lattice)


# ---------------------------------------------------------------------------
# Linear terms
# ---------------------------------------------------------------------------

def free_transport(state: KineticState) -> np.ndarray:
    """Self-propulsion phase term: -i |k| (p . khat) psi_k per mode (k=0 gives 0).

    Spectral and exact up to Galerkin truncation at the band limit: the
    degree-1 multiplier couples degree l to l +- 1 only.
    """
    lat = state.lattice
    out = sph.mul_cos_axis_batch(state.coeffs, lat.k_hat, state.L)
    out *= -1j * lat.k_abs[:, None, None]
    return out


def jeffery_source(flow: FlowField, gamma: float, L: int) -> np.ndarray:
    """Alignment source +(3 gamma / 4 pi) (p x p) : E(u_k), a pure degree-2 field.

    E(u_k) = (i k x u_k + u_k x i k)/2; its trace i k . u_k vanishes for
    incompressible flows, so no degree-0 content is produced.
    """
    lat = flow.lattice
    T2 = _pp_coeff_table()
    Ehat = 0.5j * (np.einsum("ni,nj->nij", lat.k_vec, flow.u)
                   + np.einsum("ni,nj->nij", flow.u, lat.k_vec))
    block = np.einsum("nij,ijlm->nlm", Ehat, T2)
    out = np.zeros((lat.n_stored, L + 1, 2 * L + 1), dtype=complex)
    out[:, :3, L - 2 : L + 3] = (3.0 * gamma / (4.0 * np.pi)) * block
    return out


# ---------------------------------------------------------------------------
# Physical-space machinery for the quadratic terms
# ---------------------------------------------------------------------------

def _x_grid_size(kmax: int) -> int:
    """Zero-padded FFT size per axis; >= 3 kmax + 1 keeps quadratic products alias-free."""
    n = 3 * kmax + 1
    return n + (n % 2)


def _embed_cube(cube: np.ndarray, N: int) -> np.ndarray:
    """Place a (2kmax+1)^3 mode cube into an N^3 FFT layout (wraparound bins)."""
    kmax = (cube.shape[0] - 1) // 2
    out = np.zeros((N, N, N) + cube.shape[3:], dtype=complex)
    idx = (np.arange(-kmax, kmax + 1)) % N
    out[np.ix_(idx, idx, idx)] = cube
    return out


def _extract_cube(arr: np.ndarray, kmax: int) -> np.ndarray:
    N = arr.shape[0]
    idx = (np.arange(-kmax, kmax + 1)) % N
    return arr[np.ix_(idx, idx, idx)]


def _to_x(cube: np.ndarray, N: int) -> np.ndarray:
    """Modes -> physical values on the N^3 grid (unnormalized exponential sum)."""
    return np.fft.ifftn(_embed_cube(cube, N), axes=(0, 1, 2)) * N**3


def _from_x(vals: np.ndarray, kmax: int) -> np.ndarray:
    N = vals.shape[0]
    return _extract_cube(np.fft.fftn(vals, axes=(0, 1, 2)) / N**3, kmax)


def _gather_stored(cube: np.ndarray, lattice) -> np.ndarray:
    kmax = lattice.kmax
    n = lattice.n_int
    return cube[n[:, 0] + kmax, n[:, 1] + kmax, n[:, 2] + kmax]


def convection(state: KineticState, flow: FlowField) -> np.ndarray:
    """Advection by the fluid: -(u . grad_x psi)_k via de-aliased convolution.

    Acts identically on every (l, m) coefficient; conserves the total L^2
    norm up to truncation because u is divergence-free.
    """
    lat = state.lattice
    kmax = lat.kmax
    if kmax == 0:
        return np.zeros_like(state.coeffs)
    N = _x_grid_size(kmax)
    psi = state.full_coeffs()
    nlm = (state.L + 1) * (2 * state.L + 1)
    w = 2 * kmax + 1
    psi_flat = psi.reshape(w, w, w, nlm)
    kx = 2.0 * np.pi * np.arange(-kmax, kmax + 1)
    u_x = _to_x(flow.full_modes(), N)  # (N, N, N, 3)
    out_x = np.zeros((N, N, N, nlm), dtype=complex)
    for axis, shape in ((0, (w, 1, 1, 1)), (1, (1, w, 1, 1)), (2, (1, 1, w, 1))):
        dpsi = _to_x(1j * kx.reshape(shape) * psi_flat, N)
        out_x -= u_x[..., axis : axis + 1] * dpsi
    out = _from_x(out_x, kmax).reshape(w, w, w, state.L + 1, 2 * state.L + 1)
    return _gather_stored(out, lat)


_JEFFERY_CACHE: dict[tuple[int, int], dict] = {}


def _jeffery_tables(L: int) -> dict:
    """Dense synthesis/weak-divergence matrices on a grid exact for the
    degree-3 Jeffery multiplier times band-L fields, analyzed at band L."""
    key = (L, 0)
    tab = _JEFFERY_CACHE.get(key)
    if tab is not None:
        return tab
    grid = sph.SphGrid(L + 4, 2 * L + 8)
    basis = grid.basis(L)
    n_nodes = grid.n_theta * grid.n_phi
    nlm = (L + 1) * (2 * L + 1)
    ms = np.arange(-L, L + 1)
    phase = np.exp(1j * np.outer(ms, grid.phi))  # (2L+1, n_phi)
    # synthesis matrix S[(l m), node]
    S = (basis.P[:, :, :, None] * phase[None, :, None, :]).reshape(nlm, n_nodes)
    # weak divergence matrices: d_lm = -[F_t . A + F_p . B] over nodes
    wfull = (grid.weights * np.ones((grid.n_theta, grid.n_phi))).ravel()
    conj_phase = np.conj(phase)
    A = (basis.DP[:, :, :, None] * conj_phase[None, :, None, :]).reshape(nlm, n_nodes) * wfull
    B = (-1j * basis.MP[:, :, :, None] * conj_phase[None, :, None, :]).reshape(nlm, n_nodes) * wfull
    p, e_t, e_p = grid.frames
    pn = p.reshape(n_nodes, 3)
    etn = e_t.reshape(n_nodes, 3)
    epn = e_p.reshape(n_nodes, 3)
    # Q[a*3+b, n] = frame_a(n) p_b(n): V_frame = M.reshape(-1, 9) @ Q
    Qt = np.einsum("na,nb->abn", etn, pn).reshape(9, n_nodes)
    Qp = np.einsum("na,nb->abn", epn, pn).reshape(9, n_nodes)
    tab = {
        "grid": grid,
        "S": S.copy(),            # (nlm, nodes), values = coeffs @ S
        "A": A.T.copy(),          # (nodes, nlm)
        "B": B.T.copy(),
        "Qt": Qt,
        "Qp": Qp,
    }
    _JEFFERY_CACHE[key] = tab
    return tab


def jeffery_transport(state: KineticState, flow: FlowField, gamma: float) -> np.ndarray:
    """Rotation flux term: -div_p( P_{p-perp}[(gamma E(u) + W(u)) p] psi ).

    The velocity-gradient matrix gamma E + W is assembled per physical
    x-node; the tangential Jeffery field multiplies psi on an orientation
    grid sized for exact (de-aliased) Galerkin divergence at band L.  The
    k = 0 output has zero sphere integral structurally (divergence theorem).
    """
    lat = state.lattice
    kmax = lat.kmax
    if kmax == 0:
        return np.zeros_like(state.coeffs)
    L = state.L
    tab = _jeffery_tables(L)
    N = _x_grid_size(kmax)
    w = 2 * kmax + 1
    nlm = (L + 1) * (2 * L + 1)

    # velocity gradient in physical space: G_ij(x) = d_i u_j
    kx = 2.0 * np.pi * np.arange(-kmax, kmax + 1)
    u_modes = flow.full_modes()
    G = np.empty((N, N, N, 3, 3), dtype=complex)
    for i, shape in ((0, (w, 1, 1, 1)), (1, (1, w, 1, 1)), (2, (1, 1, w, 1))):
        G[..., i, :] = _to_x(1j * kx.reshape(shape) * u_modes, N)
    E = 0.5 * (G + np.swapaxes(G, -1, -2))
    W = 0.5 * (np.swapaxes(G, -1, -2) - G)  # W_ab = (d_b u_a - d_a u_b)/2, (grad u)^T antisym part
    M = (gamma * E + W).reshape(-1, 3, 3)  # M_ab so that (M p)_a = gamma E_ab p_b + W_ab p_b

    # psi on the orientation grid, per x-node
    psi_x = _to_x(state.full_coeffs().reshape(w, w, w, nlm), N).reshape(-1, nlm)
    psi_vals = psi_x @ tab["S"]  # (nx, nodes)

    M9 = M.reshape(-1, 9)
    F_t = (M9 @ tab["Qt"]) * psi_vals
    F_p = (M9 @ tab["Qp"]) * psi_vals
    # weak divergence, then flip sign for the flux term's contribution
    div = -(F_t @ tab["A"] + F_p @ tab["B"])
    out_x = (-div).reshape(N, N, N, nlm)
    out = _from_x(out_x, kmax).reshape(w, w, w, L + 1, 2 * L + 1)
    return _gather_stored(out, lat)


# ---------------------------------------------------------------------------
# Assembled right-hand side
# ---------------------------------------------------------------------------

def rhs_full(state: KineticState, params, flags: TermFlags = TermFlags(),
             flow: FlowField | None = None) -> tuple[np.ndarray, FlowField]:
    """All explicit terms of d psi/dt (diffusion excluded; the integrator
    applies it exactly).  Returns (derivative coefficients, flow used)."""
    if flow is None:
        flow = compute_flow(state, params) if flags.stress_feedback \
            else FlowField.zeros(state.lattice.kmax)
    out = np.zeros_like(state.coeffs)
    if flags.free_transport:
        out += free_transport(state)
    if flags.stress_feedback:
        out += jeffery_source(flow, params.gamma, state.L)
    if flags.convection:
        out += convection(state, flow)
    if flags.jeffery_transport:
        out += jeffery_transport(state, flow, params.gamma)
    return out, flow
