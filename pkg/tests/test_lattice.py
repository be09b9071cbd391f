import math

import numpy as np
import pytest

from nanotorus.hamiltonian import find_bonds
from nanotorus.lattice import (TorusGeometry, armchair_bonds, contact_frame,
                               equator_contacts, geometry_echo, place_leads,
                               quantize_alpha, site_positions, torus_position)


def test_torus_position_reference_points():
    g = TorusGeometry()
    assert np.allclose(torus_position(0.0, 0.0, g), [60.0, 0.0, 0.0])
    assert np.allclose(torus_position(math.pi / 2, 0.0, g), [58.0, 0.0, 2.0])
    assert np.allclose(torus_position(math.pi, math.pi / 2, g), [0.0, 56.0, 0.0])


def test_geometry_validation():
    with pytest.raises(ValueError):
        TorusGeometry(major_radius=1.0, minor_radius=2.0)
    with pytest.raises(ValueError):
        TorusGeometry(n_layers=2)


def test_default_torus_has_1800_atoms_on_the_surface(default_sites):
    g = TorusGeometry()
    assert len(default_sites) == g.n_atoms == 1800
    assert [s.index for s in default_sites] == list(range(1800))
    xyz = site_positions(default_sites)
    rho = np.hypot(xyz[:, 0], xyz[:, 1])
    assert np.allclose((rho - g.major_radius) ** 2 + xyz[:, 2] ** 2, g.minor_radius**2)
    for s in default_sites[:24]:
        assert np.allclose(s.position, torus_position(s.theta, s.phi, g))


def test_layer_spacing_matches_armchair_cell():
    g = TorusGeometry()
    arc = 2 * math.pi * g.major_radius / g.n_layers
    assert arc == pytest.approx(2.43, abs=0.01)
    assert abs(arc - 2.46) / 2.46 < 0.02
    assert g.layer_angle_deg == pytest.approx(2.4)


def test_topological_bonds_match_distance_bonds(default_sites):
    xyz = site_positions(default_sites)
    topo = armchair_bonds(150)
    assert np.array_equal(topo, find_bonds(xyz))
    lengths = np.linalg.norm(xyz[topo[:, 0]] - xyz[topo[:, 1]], axis=1)
    assert 1.2 < lengths.min() and lengths.max() < 1.6


@pytest.mark.parametrize("n", [3, 6, 150])
def test_every_atom_has_three_neighbours(n):
    bonds = armchair_bonds(n)
    assert np.all(np.bincount(bonds.ravel(), minlength=12 * n) == 3)
    layer = bonds // 12
    gap = (layer[:, 1] - layer[:, 0]) % n
    # exactly one neighbour per atom in the adjacent layers
    assert np.count_nonzero(gap != 0) == 6 * n


def test_bonds_are_bipartite():
    bonds = armchair_bonds(10)
    colour = np.full(120, -1)
    colour[0] = 0
    adj = [[] for _ in range(120)]
    for i, j in bonds:
        adj[i].append(j)
        adj[j].append(i)
    stack = [0]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if colour[j] < 0:
                colour[j] = 1 - colour[i]
                stack.append(j)
            assert colour[j] != colour[i]


def test_quantize_alpha_rounds_half_away_from_zero():
    assert quantize_alpha(180.0, 150) == 75
    assert quantize_alpha(1.2, 150) == 1
    assert quantize_alpha(-1.2, 150) == 149
    assert quantize_alpha(3.5, 150) == 1
    assert quantize_alpha(3.6, 150) == 2
    with pytest.raises(ValueError, match="nearest grid angles are 88.8 and 91.2"):
        quantize_alpha(90.0, 150, strict=True)


def test_place_leads_back_to_back(default_sites):
    p = place_leads(default_sites, 180.0)
    assert (p.left_layer, p.right_layer) == (0, 75)
    assert p.alpha == 180.0
    assert len(p.left_indices) == len(p.right_indices) == 4


def test_place_leads_reports_realized_angle(default_sites):
    p = place_leads(default_sites, 90.0)
    assert p.right_layer == 38
    assert p.alpha == pytest.approx(91.2)
    assert p.alpha_requested == 90.0
    assert place_leads(default_sites, 450.0).alpha == pytest.approx(451.2)


def test_place_leads_rejects_bad_angles(default_sites):
    with pytest.raises(ValueError):
        place_leads(default_sites, 0.5)
    with pytest.raises(ValueError):
        place_leads(default_sites, 30.0, angle_range=(45.0, 315.0))


def test_equator_contacts_are_the_outermost_atoms(default_sites):
    contacts = equator_contacts(default_sites, 75)
    assert all(c.layer == 75 for c in contacts)
    layer = [s for s in default_sites if s.layer == 75]
    rho = lambda s: math.hypot(s.position[0], s.position[1])
    cutoff = min(rho(c) for c in contacts)
    assert sum(rho(s) >= cutoff - 1e-12 for s in layer) == 4
    assert sorted(round(math.degrees(math.remainder(c.theta, 2 * math.pi))) for c in contacts) == [-40, -20, 20, 40]


def test_contact_frame_is_centred_and_rotation_invariant(default_sites):
    g = TorusGeometry()
    a = contact_frame(equator_contacts(default_sites, 0), g)
    b = contact_frame(equator_contacts(default_sites, 75), g)
    assert np.allclose(a.mean(axis=0), 0.0)
    assert np.allclose(a, b)
    assert np.abs(a).max() < 2.0


def test_geometry_echo_lists_realized_values(default_sites):
    text = geometry_echo(TorusGeometry(), place_leads(default_sites, 90.0))
    assert "alpha_realized_deg=91.2" in text
    assert "n_atoms=1800" in text
