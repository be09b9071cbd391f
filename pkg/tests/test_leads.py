import warnings

import numpy as np
import pytest

from nanotorus.constants import HBAR2_OVER_2ME
from nanotorus.leads import (LeadParams, MetalLead, ModeCutoffWarning, broadening,
                             check_cutoff, mode_energy, retarded_bracket, self_energy,
                             surface_green)

from conftest import default_contact_lead


def _decimation_surface(z, onsite, hop, tol=1e-14, max_iter=200):
    """Lopez-Sancho renormalisation for a semi-infinite 1-D chain."""
    eps_s = eps = onsite + 0j
    a = b = hop + 0j
    for _ in range(max_iter):
        g = 1.0 / (z - eps)
        eps_s = eps_s + a * g * b
        eps = eps + a * g * b + b * g * a
        a, b = a * g * a, b * g * b
        if abs(a) < tol and abs(b) < tol:
            break
    return 1.0 / (z - eps_s)


def test_mode_energy_lowest_mode():
    p = LeadParams(width_y=10.0, width_z=10.0)
    assert mode_energy(1, 1, p) == pytest.approx(2 * 3.8099821 * np.pi**2 / 100, rel=1e-8)
    wide = LeadParams(width_y=20.0, width_z=10.0)
    assert mode_energy(1, 0, wide) == pytest.approx(mode_energy(1, 0, p) / 4)


def test_lead_defaults_put_fermi_level_inside_the_band():
    p = LeadParams()
    assert p.hopping == pytest.approx(2 * HBAR2_OVER_2ME)
    assert 2 * p.hopping > p.fermi_energy
    assert (p.cutoff_y, p.cutoff_z) == (9, 9)


def test_bracket_is_the_retarded_chain_root():
    alpha = np.linspace(-3, 3, 601)
    br = retarded_bracket(alpha)
    # roots of x^2 + 2 alpha x + 1 = 0
    assert np.allclose(br**2 + 2 * alpha * br + 1, 0, atol=1e-12)
    inside = np.abs(alpha) <= 1
    assert np.allclose(np.abs(br[inside]), 1.0)
    assert np.all(br[inside].imag >= 0)
    assert np.all(np.abs(br[~inside]) <= 1.0)
    assert np.isfinite(retarded_bracket(np.array([-1e9]))).all()


@pytest.mark.parametrize("E", [-0.7, 0.0, 0.4, 1.0])
def test_surface_green_matches_decimation(E):
    # each transverse mode is a chain with on-site t and hopping t/2 in the
    # energy measured from its threshold; g sums the chains with the
    # normalised box modes and the 1/a of the continuum normalisation
    p = default_contact_lead(mode_cutoff=4)
    t = p.hopping
    yz = p.contact_coords
    for r_t, r_s in [(yz[0], yz[0]), (yz[0], yz[2]), (yz[1], yz[3])]:
        ref = 0.0
        for m in range(1, 5):
            for n in range(1, 5):
                z = E + p.fermi_energy - mode_energy(m, n, p) + 1e-11j
                g1 = _decimation_surface(z, t, t / 2)
                phi = lambda r: 2 / np.sqrt(p.width_y * p.width_z) * np.sin(
                    m * np.pi * r[0] / p.width_y) * np.sin(n * np.pi * r[1] / p.width_z)
                ref += phi(r_t) * phi(r_s) * g1 / p.spacing
        g = surface_green(np.array([E]), r_t, r_s, p)[0]
        assert g == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_single_open_mode_mid_band():
    p = LeadParams(spacing=1.0, width_y=5.0, width_z=5.0, mode_cutoff=1,
                   contact_coords=((2.5, 2.5),))
    # put the lone mode at the centre of its band (alpha = 0)
    E = p.hopping + mode_energy(1, 1, p) - p.fermi_energy
    g = surface_green(np.array([E]), (2.5, 2.5), (2.5, 2.5), p)[0]
    assert g.real == pytest.approx(0.0, abs=1e-15)
    assert g.imag == pytest.approx(-8 / (p.hopping * p.spacing * 25), rel=1e-12)


def test_green_matrix_is_symmetric_and_retarded():
    lead = MetalLead(default_contact_lead())
    E = np.linspace(-1, 1, 21)
    g = lead.green_matrix(E)
    assert g.shape == (21, 4, 4)
    assert np.allclose(g, np.swapaxes(g, -1, -2))
    assert np.all(np.diagonal(g, axis1=-2, axis2=-1).imag <= 0)


def test_batched_and_pointwise_agree():
    p = default_contact_lead()
    lead = MetalLead(p)
    E = np.array([-0.3, 0.2])
    g = lead.green_matrix(E)
    for k in range(2):
        for i in range(4):
            for j in range(4):
                ref = surface_green(E[k:k + 1], p.contact_coords[i], p.contact_coords[j], p)[0]
                assert g[k, i, j] == pytest.approx(ref, rel=1e-13)


def test_gamma_is_psd_and_matches_imaginary_part():
    lead = MetalLead(default_contact_lead())
    E = np.linspace(-1, 1, 41)
    s = lead.self_energy(E, -0.25)
    assert np.allclose(s.gamma, np.conj(np.swapaxes(s.gamma, -1, -2)))
    assert np.linalg.eigvalsh(s.gamma).min() > -1e-15
    assert np.all(np.diagonal(s.sigma, axis1=-2, axis2=-1).imag <= 0)
    g = lead.green_matrix(E)
    assert np.allclose(s.gamma, -4 * np.pi * 0.25**2 * g.imag, atol=1e-15)


def test_self_energy_scales_with_coupling_squared():
    p = default_contact_lead()
    a = self_energy(0.1, p, -0.25).sigma
    b = self_energy(0.1, p, -0.5).sigma
    assert np.allclose(b, 4 * a)
    assert np.array_equal(broadening(a), self_energy(0.1, p, 0.25).gamma)


def test_extra_modes_do_not_change_the_broadening():
    # the added modes are far above the Fermi level, i.e. closed
    p = default_contact_lead()
    E = np.linspace(-1, 1, 11)
    for a in p.contact_coords:
        for b in p.contact_coords:
            g0 = surface_green(E, a, b, p)
            g1 = surface_green(E, a, b, p, cutoff=(14, 14))
            assert np.allclose(g1.imag, g0.imag, rtol=1e-10, atol=1e-16)


def test_real_part_tail_is_reported():
    p = default_contact_lead()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(ModeCutoffWarning):
            check_cutoff(0.0, p)
    assert 1e-4 < check_cutoff(0.0, p, tol=1.0) < 1e-1


def test_contacts_must_lie_in_the_cross_section():
    with pytest.raises(ValueError):
        LeadParams(contact_coords=((11.0, 5.0),))
    with pytest.raises(ValueError):
        LeadParams(spacing=8.0)
    with pytest.raises(ValueError):
        MetalLead(LeadParams())
