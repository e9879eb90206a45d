"""State containers, norms, random states, checkpoints."""

import numpy as np
import pytest

from kinsusp import sphere as sph
from kinsusp import state as st


def test_params_validation():
    with pytest.raises(ValueError):
        st.Params(gamma=1.5)
    with pytest.raises(ValueError):
        st.Params(iota=0.0)
    with pytest.raises(ValueError):
        st.Params(nu=0.0)
    with pytest.raises(ValueError):
        st.Params(nu=1.0)
    st.Params(gamma=-1.0, iota=2.0, nu=0.5, kmax=0, L=2)


def test_lattice_half_space():
    lat = st.lattice_for(2)
    w = 5
    assert lat.n_stored == (w**3 - 1) // 2 + 1
    for n in lat.stored[1:]:
        neg = (-n[0], -n[1], -n[2])
        assert neg not in lat.index
    assert lat.stored[0] == (0, 0, 0)


def test_mode_conjugate_reconstruction():
    params = st.Params(kmax=1, L=4)
    s = st.random_state(params, seed=0)
    f = s.mode((1, 0, 0))
    g = s.mode((-1, 0, 0))
    grid = sph.grid_for_band(4)
    fv = sph.synthesize(f, grid)
    gv = sph.synthesize(g, grid)
    assert np.abs(gv - np.conj(fv)).max() < 1e-13 * np.abs(fv).max()


def test_sobolev_norm_single_mode():
    s = st.KineticState.zeros(1, 4)
    i = s.lattice.index[(0, 0, 1)]
    s.coeffs[i, 2, 4 + 1] = 1.0  # unit L2 norm on the sphere
    assert abs(st.sobolev_norm(s, 0.0) - np.sqrt(2.0)) < 1e-14


def test_sobolev_norm_zero_state():
    s = st.KineticState.zeros(2, 4)
    assert st.sobolev_norm(s, 1.5) == 0.0


def test_sobolev_norm_brute_force():
    params = st.Params(kmax=1, L=4)
    s = st.random_state(params, seed=5)
    total = 0.0
    kmax = 1
    for z in range(-kmax, kmax + 1):
        for y in range(-kmax, kmax + 1):
            for x in range(-kmax, kmax + 1):
                f = s.mode((x, y, z))
                k2 = (2 * np.pi) ** 2 * (x * x + y * y + z * z)
                total += (1 + k2) ** 2 * f.norm() ** 2
    assert abs(st.sobolev_norm(s, 2.0) - np.sqrt(total)) < 1e-12 * np.sqrt(total)


def test_sobolev_homogeneous_excludes_zero_mode():
    s = st.KineticState.zeros(1, 4)
    s.coeffs[0, 1, 4] = 3.0  # only k = 0 content
    assert st.sobolev_norm(s, 1.0, homogeneous=True) == 0.0
    assert st.sobolev_norm(s, 0.0) == 3.0


def test_flow_norm():
    f = st.FlowField.zeros(1)
    i = f.lattice.index[(0, 0, 1)]
    f.u[i] = np.array([1.0, 0, 0])
    assert abs(st.flow_norm(f, 0.0) - np.sqrt(2.0)) < 1e-14
    assert st.flow_norm(st.FlowField.zeros(1), 2.0) == 0.0
    # brute force with s = 1
    g = st.FlowField.zeros(1)
    rng = np.random.default_rng(0)
    g.u[1:] = rng.standard_normal((g.lattice.n_stored - 1, 3)) \
        + 1j * rng.standard_normal((g.lattice.n_stored - 1, 3))
    total = sum(2 * (1 + g.lattice.k_abs[i] ** 2) * np.sum(np.abs(g.u[i]) ** 2)
                for i in range(1, g.lattice.n_stored))
    assert abs(st.flow_norm(g, 1.0) - np.sqrt(total)) < 1e-12 * np.sqrt(total)


def test_random_state_deterministic():
    params = st.Params(kmax=1, L=6)
    a = st.random_state(params, seed=9)
    b = st.random_state(params, seed=9)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_random_state_zero_amplitude():
    params = st.Params(kmax=1, L=4)
    s = st.random_state(params, seed=1, profile=st.SpectrumProfile(amplitude=0.0))
    assert np.abs(s.coeffs).max() == 0.0


def test_random_state_invariants():
    params = st.Params(kmax=2, L=5)
    s = st.random_state(params, seed=3)
    assert s.reality_defect() < 1e-15
    assert abs(s.mass()) == 0.0


def test_random_state_concentrated_profile():
    params = st.Params(kmax=1, L=6)
    target_n, target_l = (0, 0, 1), 3

    def override(n, l):
        return 1.0 if (n == target_n and l == target_l) else 0.0

    s = st.random_state(params, seed=4, profile=st.SpectrumProfile(override=override))
    i = s.lattice.index[target_n]
    per_mode = np.sum(np.abs(s.coeffs) ** 2, axis=(1, 2))
    assert per_mode[i] > 0
    assert np.sum(per_mode) == per_mode[i]
    # closed form: norm^2 = 2 * ||mode||^2, content only at degree 3
    expected = np.sqrt(2.0) * np.sqrt(per_mode[i])
    assert abs(st.sobolev_norm(s, 0.0) - expected) < 1e-14
    assert np.abs(s.coeffs[i, :3]).max() == 0.0 and np.abs(s.coeffs[i, 4:]).max() == 0.0


def test_checkpoint_round_trip(tmp_path):
    params = st.Params(gamma=0.3, iota=1.5, nu=2e-2, kmax=1, L=5)
    s = st.random_state(params, seed=8)
    s.t = 1.25
    path = tmp_path / "state.npz"
    st.save_checkpoint(path, s, params)
    s2, p2 = st.load_checkpoint(path)
    assert p2 == params
    assert s2.t == s.t
    assert np.array_equal(s2.coeffs, s.coeffs)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, header=np.frombuffer(b'{"format": "other"}', dtype=np.uint8),
             coeffs=np.zeros(3))
    with pytest.raises(ValueError):
        st.load_checkpoint(path)
