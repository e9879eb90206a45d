"""Data model for the kinetic perturbation and the active Stokes flow.

The spatial domain is the unit periodic box, so wavevectors live on the
lattice 2 pi Z^3 truncated at ||n||_inf <= kmax (n the integer triple).
Since the physical distribution is real, only a half-space of modes plus
k = 0 is stored; the conjugate modes are reconstructed on demand via
psi_{-k}(p) = conj(psi_k(p)).  States are treated as immutable values by
the operators and the integrator (new arrays per step).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .sphere import SphField, sphere_integral

__all__ = [
    "Params",
    "ModeLattice",
    "KineticState",
    "FlowField",
    "SpectrumProfile",
    "sobolev_norm",
    "flow_norm",
    "random_state",
    "conjugate_coeffs",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "kinsusp-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Params:
    """Physical and discretization parameters of the dimensionless model.

    gamma : particle shape factor in [-1, 1]
    iota  : dipole strength (> 0 pullers, < 0 pushers), nonzero
    nu    : rotational diffusivity, in (0, 1)
    kmax  : Fourier truncation per axis (wavevectors 2 pi n, |n_i| <= kmax)
    L     : orientation band limit
    """

    gamma: float = 1.0
    iota: float = -1.0
    nu: float = 1e-3
    kmax: int = 4
    L: int = 32

    def __post_init__(self):
        if not -1.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma = {self.gamma} outside [-1, 1]")
        if self.iota == 0.0:
            raise ValueError("iota must be nonzero")
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu = {self.nu} outside (0, 1)")
        if self.kmax < 0 or self.L < 2:
            raise ValueError("kmax must be >= 0 and L >= 2")


def _positive_half(n: tuple[int, int, int]) -> bool:
    """Lexicographic half-space selector (z, then y, then x)."""
    x, y, z = n
    return z > 0 or (z == 0 and y > 0) or (z == 0 and y == 0 and x > 0)


class ModeLattice:
    """Truncated wavevector lattice with half-space storage bookkeeping."""

    def __init__(self, kmax: int):
        self.kmax = kmax
        stored = [(0, 0, 0)]
        full = []
        r = range(-kmax, kmax + 1)
        for z in r:
            for y in r:
                for x in r:
                    n = (x, y, z)
                    full.append(n)
                    if _positive_half(n):
                        stored.append(n)
        self.stored = stored
        self.full = full
        self.index = {n: i for i, n in enumerate(stored)}
        self.n_int = np.array(stored, dtype=int)
        self.k_vec = 2.0 * np.pi * self.n_int.astype(float)
        self.k_abs = np.linalg.norm(self.k_vec, axis=1)
        safe = np.where(self.k_abs > 0, self.k_abs, 1.0)
        self.k_hat = self.k_vec / safe[:, None]  # zero row for k = 0

    @property
    def n_stored(self) -> int:
        return len(self.stored)

    def lookup(self, n: tuple[int, int, int]) -> tuple[int, bool]:
        """(storage index, conjugate flag) for an arbitrary lattice triple."""
        if n in self.index:
            return self.index[n], False
        neg = (-n[0], -n[1], -n[2])
        if neg in self.index:
            return self.index[neg], True
        raise KeyError(f"mode {n} outside the truncated lattice")

    def __eq__(self, other):
        return isinstance(other, ModeLattice) and other.kmax == self.kmax

    def __repr__(self):  # pragma: no cover
        return f"ModeLattice(kmax={self.kmax}, stored={self.n_stored})"


_LATTICES: dict[int, ModeLattice] = {}


def lattice_for(kmax: int) -> ModeLattice:
    lat = _LATTICES.get(kmax)
    if lat is None:
        lat = ModeLattice(kmax)
        _LATTICES[kmax] = lat
    return lat


def conjugate_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Spectral coefficients of conj(f) from those of f.

    (conj f)_{lm} = (-1)^m conj(f_{l,-m}); used to reconstruct psi_{-k}.
    """
    L = coeffs.shape[-2] - 1
    ms = np.arange(-L, L + 1)
    signs = np.where(ms % 2 == 0, 1.0, -1.0)
    return signs * np.conj(coeffs[..., ::-1])


@dataclass
class KineticState:
    """Perturbation distribution: per-mode spherical-harmonic coefficients.

    ``coeffs`` has shape (n_stored, L+1, 2L+1); row 0 is the k = 0 mode,
    which must be self-conjugate (real on the sphere) with zero mean.
    """

    lattice: ModeLattice
    L: int
    t: float
    coeffs: np.ndarray = field(repr=False)

    @classmethod
    def zeros(cls, kmax: int, L: int, t: float = 0.0) -> "KineticState":
        lat = lattice_for(kmax)
        return cls(lat, L, t, np.zeros((lat.n_stored, L + 1, 2 * L + 1), dtype=complex))

    def copy(self) -> "KineticState":
        return KineticState(self.lattice, self.L, self.t, self.coeffs.copy())

    def mode(self, n: tuple[int, int, int]) -> SphField:
        """Coefficients of mode 2 pi n (conjugate reconstructed if needed)."""
        i, conj = self.lattice.lookup(n)
        c = self.coeffs[i]
        return SphField(self.L, conjugate_coeffs(c) if conj else c.copy())

    def full_coeffs(self) -> np.ndarray:
        """Dense cube (2kmax+1, 2kmax+1, 2kmax+1, L+1, 2L+1), index order (x, y, z)."""
        kmax = self.lattice.kmax
        w = 2 * kmax + 1
        out = np.zeros((w, w, w, self.L + 1, 2 * self.L + 1), dtype=complex)
        half = self.coeffs
        conj = conjugate_coeffs(half)
        for i, (x, y, z) in enumerate(self.lattice.stored):
            out[x + kmax, y + kmax, z + kmax] = half[i]
            if (x, y, z) != (0, 0, 0):
                out[-x + kmax, -y + kmax, -z + kmax] = conj[i]
        return out

    def reality_defect(self) -> float:
        """Deviation of the k = 0 mode from self-conjugacy (should be ~0)."""
        c0 = self.coeffs[0]
        return float(np.abs(c0 - conjugate_coeffs(c0)).max())

    def mass(self) -> complex:
        return sphere_integral(SphField(self.L, self.coeffs[0]))


@dataclass
class FlowField:
    """Divergence-free Fourier velocity: u_k in C^3 per stored mode, u_0 = 0."""

    lattice: ModeLattice
    u: np.ndarray = field(repr=False)  # (n_stored, 3) complex

    @classmethod
    def zeros(cls, kmax: int) -> "FlowField":
        lat = lattice_for(kmax)
        return cls(lat, np.zeros((lat.n_stored, 3), dtype=complex))

    def mode(self, n: tuple[int, int, int]) -> np.ndarray:
        i, conj = self.lattice.lookup(n)
        return np.conj(self.u[i]) if conj else self.u[i].copy()

    def incompressibility_defect(self) -> float:
        return float(np.abs(np.einsum("nc,nc->n", self.lattice.k_vec, self.u)).max())

    def full_modes(self) -> np.ndarray:
        """Dense cube (2kmax+1, ..., 3) of velocity modes, index order (x, y, z)."""
        kmax = self.lattice.kmax
        w = 2 * kmax + 1
        out = np.zeros((w, w, w, 3), dtype=complex)
        for i, (x, y, z) in enumerate(self.lattice.stored):
            out[x + kmax, y + kmax, z + kmax] = self.u[i]
            if (x, y, z) != (0, 0, 0):
                out[-x + kmax, -y + kmax, -z + kmax] = np.conj(self.u[i])
        return out


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _mode_weights(lattice: ModeLattice, s: float, homogeneous: bool) -> np.ndarray:
    k2 = lattice.k_abs**2
    mult = np.full(lattice.n_stored, 2.0)
    mult[0] = 1.0  # k = 0 stored once
    if homogeneous:
        w = np.where(k2 > 0, k2**s if s != 0 else 1.0, 0.0)
        w[0] = 0.0
    else:
        w = (1.0 + k2) ** s
    return mult * w


def sobolev_norm(state: KineticState, s: float, homogeneous: bool = False) -> float:
    """H^s_x L^2_p norm: (sum_k (1+|k|^2)^s ||psi_k||^2)^{1/2}.

    With ``homogeneous=True`` the weight is |k|^{2s} and k = 0 is excluded.
    The sum runs over the full lattice (stored modes count twice).
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    norms2 = np.sum(np.abs(state.coeffs) ** 2, axis=(1, 2))
    return float(np.sqrt(np.sum(_mode_weights(state.lattice, s, homogeneous) * norms2)))


def flow_norm(flow: FlowField, s: float, homogeneous: bool = False) -> float:
    """H^s norm of the velocity field from its mode amplitudes."""
    if s < 0:
        raise ValueError("s must be >= 0")
    norms2 = np.sum(np.abs(flow.u) ** 2, axis=1)
    return float(np.sqrt(np.sum(_mode_weights(flow.lattice, s, homogeneous) * norms2)))


# ---------------------------------------------------------------------------
# Random states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumProfile:
    """Per-(k, l) amplitude schedule for random test states.

    amplitude * exp(-x_rate |n|^2) * exp(-l_rate l); a custom callable
    (n_int, l) -> float overrides the closed form when provided.
    """

    amplitude: float = 1.0
    x_rate: float = 0.5
    l_rate: float = 0.3
    override: Callable[[tuple[int, int, int], int], float] | None = None

    def __call__(self, n: tuple[int, int, int], l: int) -> float:
        if self.override is not None:
            return self.override(n, l)
        n2 = n[0] ** 2 + n[1] ** 2 + n[2] ** 2
        return self.amplitude * np.exp(-self.x_rate * n2) * np.exp(-self.l_rate * l)


def random_state(params: Params, seed: int, profile: SpectrumProfile | None = None) -> KineticState:
    """Seeded random state satisfying reality and zero-mass by construction."""
    profile = profile or SpectrumProfile()
    lat = lattice_for(params.kmax)
    L = params.L
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((lat.n_stored, L + 1, 2 * L + 1)) \
        + 1j * rng.standard_normal((lat.n_stored, L + 1, 2 * L + 1))
    amp = np.zeros((lat.n_stored, L + 1, 1))
    for i, n in enumerate(lat.stored):
        for l in range(L + 1):
            amp[i, l, 0] = profile(n, l)
    ls = np.arange(L + 1)[:, None]
    ms = np.arange(-L, L + 1)[None, :]
    mask = (np.abs(ms) <= ls).astype(float)
    coeffs = raw * amp * mask
    # k = 0: real on the sphere, zero total mass
    coeffs[0] = 0.5 * (coeffs[0] + conjugate_coeffs(coeffs[0]))
    coeffs[0, 0, L] = 0.0
    return KineticState(lat, L, 0.0, coeffs)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, state: KineticState, params: Params) -> None:
    """Self-describing binary dump (versioned JSON header + coefficient array)."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "t": state.t,
        "L": state.L,
        "kmax": state.lattice.kmax,
        "params": {
            "gamma": params.gamma, "iota": params.iota, "nu": params.nu,
            "kmax": params.kmax, "L": params.L,
        },
    }
    np.savez_compressed(path, header=np.frombuffer(
        json.dumps(header, sort_keys=True).encode(), dtype=np.uint8), coeffs=state.coeffs)


def load_checkpoint(path) -> tuple[KineticState, Params]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a kinsusp checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        coeffs = data["coeffs"]
    params = Params(**header["params"])
    state = KineticState(lattice_for(header["kmax"]), header["L"], header["t"], coeffs)
    return state, params
