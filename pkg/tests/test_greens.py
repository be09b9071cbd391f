import time
import warnings

import numpy as np
import pytest

import nanotorus.greens as greens
from nanotorus.device import Device, DeviceConfig
from nanotorus.greens import (EffectiveSystem, SingularSystemError, recursive_blocks,
                              solve_dense, solve_recursive)
from nanotorus.hamiltonian import HoppingParams
from nanotorus.lattice import TorusGeometry

from conftest import default_contact_lead, small_device


def _reference_inverse(sys: EffectiveSystem) -> np.ndarray:
    # built independently of EffectiveSystem.dense_matrix
    H = sys.hamiltonian.to_dense()
    N = H.shape[0]
    sigma = np.zeros((N, N), dtype=complex)
    sigma[np.ix_(sys.left_indices, sys.left_indices)] += sys.sigma_left.sigma
    sigma[np.ix_(sys.right_indices, sys.right_indices)] += sys.sigma_right.sigma
    return np.linalg.inv((sys.energy + 1j * sys.eta) * np.eye(N) - H - sigma)


def _diag_blocks(G, b=12):
    n = G.shape[0] // b
    return np.stack([G[i*b:(i+1)*b, i*b:(i+1)*b] for i in range(n)])


def _rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


@pytest.mark.parametrize("n,b0,alpha,E", [
    (3, 0.0, 120.0, 0.05), (6, 2.0, 180.0, -0.4), (6, 4.5, 60.0, 0.0),
    (10, 1.0, 252.0, 0.3), (10, 0.0, 36.0, -0.9),
])
def test_recursive_matches_reference_inverse(n, b0, alpha, E):
    sys = small_device(n, b0=b0, alpha=alpha).system(E)
    G = _reference_inverse(sys)
    for solver in (solve_recursive, solve_dense):
        res = solver(sys)
        assert _rel(res.contact_columns, G[:, sys.contact_indices]) < 1e-10
        assert _rel(res.diag_blocks, _diag_blocks(G)) < 1e-10


def test_residual_on_computed_columns():
    sys = Device(DeviceConfig(), b0=1.5, alpha=91.2).system(0.013)
    res = solve_recursive(sys, with_diag=False)
    M = sys.dense_matrix()
    unit = np.zeros_like(res.contact_columns)
    unit[sys.contact_indices, np.arange(8)] = 1
    assert np.abs(M @ res.contact_columns - unit).max() < 1e-9


def test_retarded_diagonal_has_nonpositive_imaginary_part():
    res = small_device(10, b0=3.0).greens(0.2)
    d = np.diagonal(res.diag_blocks, axis1=-2, axis2=-1)
    assert np.all(d.imag <= 0)


def test_advanced_is_conjugate_transpose_and_solves_adjoint():
    sys = small_device(6, b0=1.0).system(0.1)
    res = solve_recursive(sys)
    Ga = res.advanced_contact_block()
    G = _reference_inverse(sys)
    c = sys.contact_indices
    assert np.allclose(Ga, G.conj().T[np.ix_(c, c)], atol=1e-13)


def test_reciprocity_at_zero_field_and_under_reversal():
    r0 = small_device(6).greens(0.3, with_diag=False).contact_block
    assert np.allclose(r0, r0.T, atol=1e-12)
    rp = small_device(6, b0=2.5).greens(0.3, with_diag=False).contact_block
    rm = small_device(6, b0=-2.5).greens(0.3, with_diag=False).contact_block
    assert np.allclose(rp, rm.T, atol=1e-12)


def test_huge_eta_limit():
    eta = 1e6
    res = small_device(6, eta=eta).greens(0.0)
    d = np.diagonal(res.diag_blocks, axis1=-2, axis2=-1)
    assert np.allclose(d, -1j / eta, rtol=1e-4)


def test_decoupled_sites():
    cfg = DeviceConfig(geometry=TorusGeometry(n_layers=6), lead=default_contact_lead(),
                       hopping=HoppingParams(v_device=0.0), eta=1e-3)
    res = Device(cfg, t_hop=0.0).greens(0.25)
    d = np.diagonal(res.diag_blocks, axis1=-2, axis2=-1)
    assert np.allclose(d, 1 / (0.25 + 1e-3j))
    assert np.allclose(res.contact_block, np.eye(8) / (0.25 + 1e-3j))


def test_singular_system_is_reported_with_energy():
    cfg = DeviceConfig(geometry=TorusGeometry(n_layers=3), lead=default_contact_lead(),
                       hopping=HoppingParams(v_device=0.0), eta=0.0)
    dev = Device(cfg, alpha=120.0, t_hop=0.0)
    with pytest.raises(SingularSystemError, match="E=0.0"):
        solve_dense(dev.system(0.0))
    with pytest.raises(SingularSystemError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            solve_recursive(dev.system(0.0))


def test_pivot_breakdown_falls_back_to_dense(monkeypatch):
    sys = small_device(6, b0=1.0).system(0.05)
    ref = solve_dense(sys)
    monkeypatch.setattr(greens, "PIVOT_COND_LIMIT", 0.0)
    with pytest.warns(RuntimeWarning, match="pivot breakdown"):
        res = solve_recursive(sys)
    assert np.allclose(res.contact_columns, ref.contact_columns, atol=1e-13)


def test_energy_mismatch_is_rejected():
    dev = small_device(6)
    sl, sr = dev.self_energies(0.1)
    with pytest.raises(ValueError):
        EffectiveSystem(dev.hamiltonian, 0.2, sl, sr, dev.placement.left_indices,
                        dev.placement.right_indices)


def test_batched_spectrum_matches_pointwise():
    dev = small_device(10, b0=0.8, alpha=108.0)
    E = np.linspace(-0.5, 0.5, 7)
    s = dev.spectrum(E, chunk=3)
    from nanotorus.observables import density_of_states, transmission
    for k, e in enumerate(E):
        res = dev.greens(float(e), with_diag=False)
        sl, sr = dev.self_energies(float(e))
        assert s["T"][k] == pytest.approx(transmission(res, sl, sr), rel=1e-9)
        assert s["D_total"][k] == pytest.approx(density_of_states(res, sl, sr)[1], rel=1e-9)


def test_recursive_blocks_general_cyclic_matrix(rng):
    # plain random cyclic block-tridiagonal matrix, no physics involved
    n, b = 7, 3
    diag = rng.normal(size=(2, n, b, b)) + 1j * rng.normal(size=(2, n, b, b)) + 6 * np.eye(b)
    lower = rng.normal(size=(n - 1, b, b)) + 0j
    upper = rng.normal(size=(n - 1, b, b)) + 0j
    cu, cl = rng.normal(size=(b, b)) + 0j, rng.normal(size=(b, b)) + 0j
    cols, dG, bad = recursive_blocks(diag, lower, upper, cu, cl, [2, 5], with_diag=True)
    assert not bad.any()
    for k in range(2):
        M = np.zeros((n * b, n * b), dtype=complex)
        for i in range(n):
            M[i*b:(i+1)*b, i*b:(i+1)*b] = diag[k, i]
        for i in range(n - 1):
            M[(i+1)*b:(i+2)*b, i*b:(i+1)*b] = lower[i]
            M[i*b:(i+1)*b, (i+1)*b:(i+2)*b] = upper[i]
        M[:b, -b:] = cu
        M[-b:, :b] = cl
        G = np.linalg.inv(M)
        for j in (2, 5):
            assert np.allclose(cols[j][k].reshape(n * b, b), G[:, j*b:(j+1)*b], atol=1e-12)
        assert np.allclose(dG[k], _diag_blocks(G, b), atol=1e-12)


def test_recursive_is_much_faster_than_dense():
    sys = Device(DeviceConfig()).system(0.02)
    solve_recursive(sys)
    t0 = time.perf_counter()
    solve_recursive(sys)
    t_rec = time.perf_counter() - t0
    t0 = time.perf_counter()
    solve_dense(sys)
    t_dense = time.perf_counter() - t0
    assert t_dense / t_rec >= 20, (t_dense, t_rec)
