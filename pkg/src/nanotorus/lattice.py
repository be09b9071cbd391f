"""Atomic geometry of a (3,3) armchair nanotorus and its lead contacts.

A layer is one 12-atom armchair unit cell.  It consists of two rings of
six atoms, offset azimuthally by half a layer spacing.  Around the minor
circle each ring holds three C-C dimers; in units of the bond angle
``2*pi/9`` the ring-0 atoms sit at ``3j +/- 1/2`` and the ring-1 atoms at
``3j + 3/2 +/- 1/2``.  Every atom then has one dimer partner, one zigzag
partner in the other ring of its own layer and one zigzag partner in the
neighbouring layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ATOMS_PER_LAYER = 12

# minor-circle angles of the 12 slots, in units of 2*pi/9 (one C-C bond)
_SLOT_THETA = np.array(
    [-0.5, 0.5, 2.5, 3.5, 5.5, 6.5,    # ring 0
     1.0, 2.0, 4.0, 5.0, 7.0, 8.0],    # ring 1
) * (2.0 * np.pi / 9.0)
_SLOT_RING = np.array([0] * 6 + [1] * 6)


@dataclass(frozen=True)
class TorusGeometry:
    """Torus dimensions; lengths in Å."""

    major_radius: float = 58.0
    minor_radius: float = 2.0
    n_layers: int = 150

    def __post_init__(self):
        if not self.major_radius > self.minor_radius > 0:
            raise ValueError(
                f"need major_radius > minor_radius > 0, got "
                f"R={self.major_radius}, a={self.minor_radius}"
            )
        if self.n_layers < 3:
            raise ValueError(f"n_layers must be >= 3, got {self.n_layers}")

    @property
    def atoms_per_layer(self) -> int:
        return ATOMS_PER_LAYER

    @property
    def n_atoms(self) -> int:
        return self.n_layers * ATOMS_PER_LAYER

    @property
    def layer_angle_deg(self) -> float:
        """Azimuthal layer spacing in degrees (2.4 for 150 layers)."""
        return 360.0 / self.n_layers


@dataclass(frozen=True)
class AtomSite:
    layer: int
    slot: int
    position: tuple[float, float, float]
    theta: float
    phi: float

    @property
    def index(self) -> int:
        """Row of this atom in the full Hamiltonian."""
        return self.layer * ATOMS_PER_LAYER + self.slot


@dataclass(frozen=True)
class LeadPlacement:
    """Contact atoms of both leads.

    ``alpha_requested`` is what the caller asked for, ``alpha`` the opening
    angle realised on the layer grid.
    """

    alpha_requested: float
    alpha: float
    left_layer: int
    right_layer: int
    contact_sites_left: tuple[AtomSite, ...]
    contact_sites_right: tuple[AtomSite, ...]

    @property
    def left_indices(self) -> np.ndarray:
        return np.array([s.index for s in self.contact_sites_left])

    @property
    def right_indices(self) -> np.ndarray:
        return np.array([s.index for s in self.contact_sites_right])


def torus_position(theta, phi, geom: TorusGeometry) -> np.ndarray:
    """Point on the torus surface at minor angle ``theta``, azimuth ``phi``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    rho = geom.major_radius + geom.minor_radius * np.cos(theta)
    return np.stack(
        [rho * np.cos(phi), rho * np.sin(phi), geom.minor_radius * np.sin(theta)],
        axis=-1,
    )


def build_torus(geom: TorusGeometry) -> list[AtomSite]:
    """All atoms of the torus, ordered by layer then slot."""
    n = geom.n_layers
    sites = []
    for layer in range(n):
        phis = 2.0 * np.pi * (layer + 0.5 * _SLOT_RING) / n
        xyz = torus_position(_SLOT_THETA, phis, geom)
        for slot in range(ATOMS_PER_LAYER):
            sites.append(AtomSite(
                layer=layer,
                slot=slot,
                position=tuple(float(c) for c in xyz[slot]),
                theta=float(_SLOT_THETA[slot]),
                phi=float(phis[slot]),
            ))
    return sites


def armchair_bonds(n_layers: int) -> np.ndarray:
    """Nearest-neighbour pairs (i, j), i < j, from the armchair topology alone.

    Agrees with distance-based detection on physical tori; small test rings
    (a few layers at a large radius) need it because their layers are too far
    apart for any distance cutoff.
    """
    u = np.rint(_SLOT_THETA / (np.pi / 9.0)).astype(int)   # half-bond units, mod 18
    ring0 = np.flatnonzero(_SLOT_RING == 0)
    ring1 = np.flatnonzero(_SLOT_RING == 1)
    dimers = [(s, t) for s in range(ATOMS_PER_LAYER) for t in range(s + 1, ATOMS_PER_LAYER)
              if _SLOT_RING[s] == _SLOT_RING[t] and (u[s] - u[t]) % 18 in (2, 16)]
    zigzag = [(s0, s1) for s0 in ring0 for s1 in ring1 if (u[s0] - u[s1]) % 18 in (1, 17)]
    pairs = []
    for layer in range(n_layers):
        base = layer * ATOMS_PER_LAYER
        nxt = ((layer + 1) % n_layers) * ATOMS_PER_LAYER
        pairs += [(base + s, base + t) for s, t in dimers]
        pairs += [(base + s0, base + s1) for s0, s1 in zigzag]
        pairs += [(base + s1, nxt + s0) for s0, s1 in zigzag]
    pairs = np.sort(np.array(pairs), axis=1)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def site_positions(sites) -> np.ndarray:
    """(N, 3) array of atom positions in Å."""
    return np.array([s.position for s in sites], dtype=float)


def _n_layers(sites) -> int:
    n = max(s.layer for s in sites) + 1
    if len(sites) != n * ATOMS_PER_LAYER:
        raise ValueError("site list is not a complete torus")
    return n


def equator_contacts(sites, layer: int) -> tuple[AtomSite, ...]:
    """The four atoms of ``layer`` closest to the outer equator (theta = 0).

    These are the ring-0 dimer at +/-20 degrees and its two ring-1 zigzag
    partners at +/-40 degrees.
    """
    in_layer = [s for s in sites if s.layer == layer]
    in_layer.sort(key=lambda s: (abs(math.remainder(s.theta, 2 * math.pi)), s.slot))
    return tuple(sorted(in_layer[:4], key=lambda s: s.slot))


def quantize_alpha(alpha: float, n_layers: int, strict: bool = False) -> int:
    """Layer offset of the rotated lead for opening angle ``alpha`` (deg).

    Off-grid angles round half away from zero; ``strict`` rejects them.
    """
    step = 360.0 / n_layers
    ratio = alpha / step
    k = math.floor(abs(ratio) + 0.5) * (1 if ratio >= 0 else -1)
    if strict and abs(ratio - k) > 1e-9:
        raise ValueError(
            f"alpha={alpha} deg is not a multiple of {step:g} deg; "
            f"nearest grid angles are {math.floor(ratio) * step:g} and "
            f"{math.ceil(ratio) * step:g}"
        )
    return k % n_layers


def place_leads(sites, alpha: float, *, strict: bool = False,
                angle_range: tuple[float, float] | None = None) -> LeadPlacement:
    """Attach the fixed lead at layer 0 and the rotated lead at angle ``alpha``.

    Parameters
    ----------
    sites : list of AtomSite
        Output of :func:`build_torus`.
    alpha : float
        Opening angle between the leads in degrees.  Values are taken
        modulo 360 for the layer choice.
    strict : bool
        Reject angles that are not multiples of the layer spacing.
    angle_range : (lo, hi), optional
        If given, reject angles outside ``[lo, hi]`` (checked on ``alpha``
        as passed).
    """
    n = _n_layers(sites)
    if angle_range is not None:
        lo, hi = angle_range
        if not lo - 1e-9 <= alpha <= hi + 1e-9:
            raise ValueError(f"alpha={alpha} deg outside [{lo}, {hi}]")
    k = quantize_alpha(alpha, n, strict=strict)
    if k == 0:
        raise ValueError(f"alpha={alpha} deg puts both leads on layer 0")
    realized = k * 360.0 / n
    # keep the realised angle in the same turn as the request
    realized += 360.0 * math.floor((alpha - realized) / 360.0 + 0.5)
    return LeadPlacement(
        alpha_requested=float(alpha),
        alpha=float(realized),
        left_layer=0,
        right_layer=k,
        contact_sites_left=equator_contacts(sites, 0),
        contact_sites_right=equator_contacts(sites, k),
    )


def contact_frame(contacts, geom: TorusGeometry) -> np.ndarray:
    """Transverse (y, z) coordinates of contact atoms relative to their centroid.

    ``y`` runs along the azimuthal direction at the contacts' mean azimuth and
    ``z`` along the torus axis; the lead face is taken as flat.
    """
    xyz = np.array([s.position for s in contacts])
    phi_c = math.atan2(xyz[:, 1].mean(), xyz[:, 0].mean())
    e_phi = np.array([-math.sin(phi_c), math.cos(phi_c), 0.0])
    yz = np.column_stack([xyz @ e_phi, xyz[:, 2]])
    return yz - yz.mean(axis=0)


def placement_echo(placement: LeadPlacement) -> str:
    """key=value text describing where the leads ended up."""
    lines = [
        f"alpha_requested_deg={placement.alpha_requested!r}",
        f"alpha_realized_deg={placement.alpha!r}",
        f"left_layer={placement.left_layer}",
        f"right_layer={placement.right_layer}",
        "left_contacts=" + ",".join(str(i) for i in placement.left_indices),
        "right_contacts=" + ",".join(str(i) for i in placement.right_indices),
    ]
    return "\n".join(lines) + "\n"


def geometry_echo(geom: TorusGeometry, placement: LeadPlacement | None = None) -> str:
    """key=value text describing the realised geometry."""
    lines = [
        f"major_radius_A={geom.major_radius!r}",
        f"minor_radius_A={geom.minor_radius!r}",
        f"n_layers={geom.n_layers}",
        f"atoms_per_layer={ATOMS_PER_LAYER}",
        f"n_atoms={geom.n_atoms}",
    ]
    text = "\n".join(lines) + "\n"
    return text if placement is None else text + placement_echo(placement)
