"""Time integration: exponential-IMEX stepping and single-mode solves.

The rotational diffusion nu Lap_p is diagonal in the spherical-harmonic
basis, so it is integrated exactly by the factor exp(-nu l(l+1) dt); the
remaining terms are advanced explicitly (Lawson integrating-factor scheme,
order 1 or 2).  The explicit transport term limits dt through a CFL-type
condition only; diffusion never does.

For long full-system runs an optional "split" transport mode advances the
free-transport phase by pointwise multiplication with exp(-i (p.k) dt) on
the orientation grid (a Strang half-step of diffusion on either side),
which is unconditionally stable and leaves the nonlinear terms as the only
explicitly-integrated part.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import operators as ops
from . import sphere as sph
from .sphere import SphField
from .state import FlowField, KineticState, Params, conjugate_coeffs

__all__ = [
    "RunConfig",
    "NormExplosionError",
    "step",
    "evolve",
    "solve_single_mode",
    "SingleModeTrajectory",
    "default_dt",
]


class NormExplosionError(RuntimeError):
    """Raised when the solution norm grows faster than the guard allows in one step."""


@dataclass(frozen=True)
class RunConfig:
    """Time-stepping configuration.

    dt <= 0 requests the transport-CFL default; scheme is the
    exponential-IMEX order (1 or 2, 2 the default); ``transport`` selects
    the explicit Lawson treatment or the split phase multiply; terms toggles
    linearized vs full right-hand sides.
    """

    dt: float = 0.0
    t_end: float = 1.0
    scheme: int = 2
    record_every: int = 1
    transport: str = "explicit"
    terms: ops.TermFlags = field(default_factory=ops.TermFlags)
    norm_guard: float = 10.0
    debug_checks: bool = False

    def __post_init__(self):
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.scheme not in (1, 2):
            raise ValueError("scheme must be 1 or 2")
        if self.transport not in ("explicit", "split"):
            raise ValueError("transport must be 'explicit' or 'split'")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


def default_dt(kmax: int, cfl: float = 0.5) -> float:
    """Transport-CFL step: cfl / |k|_max (diffusion is exact, hence unconstrained)."""
    kabs = 2.0 * np.pi * max(kmax, 1) * np.sqrt(3.0)
    return cfl / kabs


# ---------------------------------------------------------------------------
# Full-lattice stepping
# ---------------------------------------------------------------------------

class _Stepper:
    """Precomputed per-(params, cfg) stepping workspace."""

    def __init__(self, params: Params, cfg: RunConfig, L: int, kmax: int):
        self.params = params
        self.cfg = cfg
        dt = cfg.dt if cfg.dt > 0 else default_dt(kmax)
        self.dt = dt
        ls = np.arange(L + 1)
        lam = params.nu * ls * (ls + 1.0) if cfg.terms.diffusion else np.zeros(L + 1)
        self.E = np.exp(-lam * dt)[:, None]
        self.Eh = np.exp(-0.5 * lam * dt)[:, None]
        self.split = cfg.transport == "split"
        if self.split:
            self._setup_phase(L, kmax, dt)
        # term flags for the explicit part
        self.nl_flags = cfg.terms if not self.split else replace(cfg.terms, free_transport=False)

    def _setup_phase(self, L: int, kmax: int, dt: float):
        from .state import lattice_for
        lat = lattice_for(kmax)
        grid = sph.SphGrid(2 * L + 5, 2 * L + 18)
        basis = grid.basis(L)
        nlm = (L + 1) * (2 * L + 1)
        n_nodes = grid.n_theta * grid.n_phi
        ms = np.arange(-L, L + 1)
        phase = np.exp(1j * np.outer(ms, grid.phi))
        S = (basis.P[:, :, :, None] * phase[None, :, None, :]).reshape(nlm, n_nodes)
        wfull = (grid.weights * np.ones((grid.n_theta, grid.n_phi))).ravel()
        At = (basis.P[:, :, :, None] * np.conj(phase)[None, :, None, :]).reshape(nlm, n_nodes) * wfull
        self._synth = S
        self._anal = At.T.copy()
        p = grid.frames[0].reshape(n_nodes, 3)
        pk = p @ lat.k_vec.T  # (nodes, n_stored)
        self._phase_mul = np.exp(-1j * dt * pk).T.copy()  # (n_stored, nodes)

    def _apply_phase(self, coeffs: np.ndarray) -> np.ndarray:
        n = coeffs.shape[0]
        vals = coeffs.reshape(n, -1) @ self._synth
        vals *= self._phase_mul
        out = vals @ self._anal
        return out.reshape(coeffs.shape)

    def _linear_propagate(self, coeffs: np.ndarray) -> np.ndarray:
        if self.split:
            return self.Eh * self._apply_phase(self.Eh * coeffs)
        return self.E * coeffs

    def explicit_rhs(self, state: KineticState) -> tuple[np.ndarray, FlowField]:
        return ops.rhs_full(state, self.params, self.nl_flags)

    def advance(self, state: KineticState) -> tuple[KineticState, FlowField]:
        dt = self.dt
        c = state.coeffs
        n1, flow = self.explicit_rhs(state)
        if self.cfg.scheme == 1:
            cn = self._linear_propagate(c + dt * n1)
        else:
            mid = KineticState(state.lattice, state.L, state.t + dt,
                               self._linear_propagate(c + dt * n1))
            n2, _ = self.explicit_rhs(mid)
            cn = self._linear_propagate(c + 0.5 * dt * n1) + 0.5 * dt * n2
        new = KineticState(state.lattice, state.L, state.t + dt, cn)
        guard = self.cfg.norm_guard
        if guard > 0:
            n_old = np.linalg.norm(c)
            n_new = np.linalg.norm(cn)
            if n_new > guard * max(n_old, 1e-300):
                raise NormExplosionError(
                    f"norm grew {n_new / max(n_old, 1e-300):.2f}x in one step at "
                    f"t = {state.t:.4g} (dt = {dt:.3g}); reduce dt")
        if self.cfg.debug_checks:
            defect = new.reality_defect()
            scale = max(float(np.abs(cn).max()), 1e-300)
            if defect > 1e-10 * scale:
                raise AssertionError(f"reality invariant violated: defect {defect:.2e}")
        return new, flow


def step(state: KineticState, params: Params, cfg: RunConfig) -> KineticState:
    """One time step of the full system; reality and mass invariants preserved."""
    new, _ = _Stepper(params, cfg, state.L, state.lattice.kmax).advance(state)
    return new


Observer = tuple[str, Callable[[float, KineticState, FlowField], float]]


def evolve(initial: KineticState, params: Params, cfg: RunConfig,
           observers: Sequence[Observer] = ()) -> dict[str, np.ndarray]:
    """March to t_end, recording observers every ``record_every`` steps.

    Returns a dict of time series ('t' plus one entry per observer) and the
    final state under key '_final'.  Deterministic: identical inputs produce
    identical series.
    """
    stepper = _Stepper(params, cfg, initial.L, initial.lattice.kmax)
    n_steps = int(round(cfg.t_end / stepper.dt)) if cfg.t_end > 0 else 0
    state = initial
    flow = ops.compute_flow(state, params) if cfg.terms.stress_feedback \
        else FlowField.zeros(state.lattice.kmax)
    rows: dict[str, list] = {"t": []}
    for name, _ in observers:
        rows[name] = []

    def record(s: KineticState, f: FlowField):
        rows["t"].append(s.t)
        for name, fn in observers:
            rows[name].append(fn(s.t, s, f))

    record(state, flow)
    for i in range(n_steps):
        state, flow = stepper.advance(state)
        if (i + 1) % cfg.record_every == 0 or i == n_steps - 1:
            record(state, flow)
    out = {k: np.asarray(v) for k, v in rows.items()}
    out["_final"] = state
    return out


# ---------------------------------------------------------------------------
# Single-mode solver
# ---------------------------------------------------------------------------

@dataclass
class SingleModeTrajectory:
    """Recorded single-mode evolution: times and per-sample coefficient fields."""

    k: np.ndarray
    nu: float
    times: np.ndarray
    fields: list[SphField]
    series: dict[str, np.ndarray]


def solve_single_mode(k: np.ndarray, g_init: SphField, nu: float, cfg: RunConfig,
                      forcing: Callable[[float], SphField] | None = None,
                      observers: Sequence[tuple[str, Callable[[float, SphField], complex]]] = (),
                      record_fields: bool = True) -> SingleModeTrajectory:
    """Evolve one Fourier mode:  d_t g + i (p . k) g - nu Lap_p g = |k| F(t).

    The i (p.k) phase is applied through the exact spectral ladder (degree
    l couples to l +- 1 only, truncated at the band limit); diffusion is
    exact.  ``forcing`` returns the F field at a given time, already at the
    mode's band limit.  Observers map (t, g) to scalars.
    """
    k = np.asarray(k, dtype=float)
    kabs = float(np.linalg.norm(k))
    L = g_init.L
    dt = cfg.dt if cfg.dt > 0 else (0.5 / kabs if kabs > 0 else 0.1)
    ls = np.arange(L + 1)
    lam = nu * ls * (ls + 1.0) if cfg.terms.diffusion else np.zeros(L + 1)
    E = np.exp(-lam * dt)[:, None]
    khat = k / kabs if kabs > 0 else np.zeros(3)
    phase_on = cfg.terms.free_transport and kabs > 0

    def N(c: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros_like(c)
        if phase_on:
            out -= 1j * kabs * sph.mul_cos_axis_batch(c, khat, L)
        if forcing is not None:
            out += kabs * forcing(t).coeffs
        return out

    n_steps = int(round(cfg.t_end / dt)) if cfg.t_end > 0 else 0
    c = g_init.coeffs.copy()
    t = 0.0
    times = [0.0]
    fields = [SphField(L, c.copy())] if record_fields else []
    series: dict[str, list] = {name: [fn(0.0, SphField(L, c))] for name, fn in observers}
    prev_norm = np.linalg.norm(c)

    for i in range(n_steps):
        n1 = N(c, t)
        if cfg.scheme == 1:
            c = E * (c + dt * n1)
        else:
            cs = E * (c + dt * n1)
            c = E * (c + 0.5 * dt * n1) + 0.5 * dt * N(cs, t + dt)
        t += dt
        cur_norm = np.linalg.norm(c)
        if cfg.norm_guard > 0 and cur_norm > cfg.norm_guard * max(prev_norm, 1e-300):
            raise NormExplosionError(f"single-mode norm guard tripped at t = {t:.4g}")
        prev_norm = cur_norm
        if (i + 1) % cfg.record_every == 0 or i == n_steps - 1:
            times.append(t)
            f = SphField(L, c.copy())
            if record_fields:
                fields.append(f)
            for name, fn in observers:
                series[name].append(fn(t, f))

    return SingleModeTrajectory(k, nu, np.asarray(times), fields,
                                {k2: np.asarray(v) for k2, v in series.items()})
