"""Analytic surface Green's function and self-energies of the metallic leads.

Each lead is a semi-infinite box-shaped wire of cross-section Ly x Lz,
discretised along its axis with spacing ``a``.  Transverse modes are
particle-in-a-box states with energies E_mn; each mode is a 1-D chain
whose surface Green's function is proportional to ``exp(i k a)``.  With

    alpha_mn = (E + E_F - E_mn) / t - 1,   t = hbar^2 / (m a^2)

one has ``exp(i k a) = -alpha + sqrt(alpha^2 - 1)`` on the retarded
branch, i.e. ``Im >= 0`` inside the band and ``|.| < 1`` outside it.

The overall prefactor ``-8 m a / hbar^2 / (Ly Lz) = -8 / (t a Ly Lz)`` is
kept as written, with lengths in Å and energies in eV; only the product
``t_hop**2 * g`` enters the device, so the prefactor's units are absorbed
into the contact coupling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import HBAR2_OVER_2ME


class ModeCutoffWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LeadParams:
    """Lead parameters; lengths in Å, energies in eV.

    ``contact_coords`` are the transverse (y, z) positions of the contact
    atoms on the lead face, measured from the lead's corner.  With
    ``mode_cutoff=None`` the mode sum runs over every transverse mode the
    lead lattice supports, ``round(L / spacing) - 1`` per direction.

    The default spacing puts the Fermi level inside the lead band
    (``2 t > E_F``), as it must be for a metal.
    """

    fermi_energy: float = 6.0
    spacing: float = 1.0
    width_y: float = 10.0
    width_z: float = 10.0
    mode_cutoff: int | None = None
    contact_coords: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.spacing <= 0 or self.width_y <= 0 or self.width_z <= 0:
            raise ValueError("lead lengths must be positive")
        if self.mode_cutoff is not None and self.mode_cutoff < 1:
            raise ValueError("mode_cutoff must be >= 1")
        if min(self.cutoff_y, self.cutoff_z) < 1:
            raise ValueError("lead cross-section is narrower than two lattice spacings")
        for y, z in self.contact_coords:
            if not (0 < y < self.width_y and 0 < z < self.width_z):
                raise ValueError(
                    f"contact ({y}, {z}) lies outside the "
                    f"{self.width_y} x {self.width_z} cross-section"
                )

    @property
    def cutoff_y(self) -> int:
        if self.mode_cutoff is not None:
            return self.mode_cutoff
        return int(round(self.width_y / self.spacing)) - 1

    @property
    def cutoff_z(self) -> int:
        if self.mode_cutoff is not None:
            return self.mode_cutoff
        return int(round(self.width_z / self.spacing)) - 1

    @property
    def hopping(self) -> float:
        """t = hbar^2 / (m a^2) in eV."""
        return 2.0 * HBAR2_OVER_2ME / self.spacing**2

    @property
    def prefactor(self) -> float:
        """-8 m a / hbar^2 / (Ly Lz)."""
        return -8.0 / (self.hopping * self.spacing * self.width_y * self.width_z)

    def with_contacts(self, yz_offsets) -> "LeadParams":
        """Copy with contacts centred in the cross-section at the given offsets."""
        yz = np.asarray(yz_offsets, dtype=float)
        coords = tuple(
            (float(0.5 * self.width_y + y), float(0.5 * self.width_z + z)) for y, z in yz
        )
        return LeadParams(self.fermi_energy, self.spacing, self.width_y,
                          self.width_z, self.mode_cutoff, coords)


@dataclass(frozen=True)
class ContactSelfEnergy:
    sigma: np.ndarray
    gamma: np.ndarray
    energy: float | np.ndarray


def mode_energy(m, n, params: LeadParams):
    """Particle-in-a-box transverse energy E_mn in eV."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    return HBAR2_OVER_2ME * np.pi**2 * (m**2 / params.width_y**2 + n**2 / params.width_z**2)


def retarded_bracket(alpha):
    """sqrt(alpha^2 - 1) - alpha on the retarded (outgoing/decaying) branch."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty(alpha.shape, dtype=complex)
    inside = np.abs(alpha) <= 1.0
    out[inside] = -alpha[inside] + 1j * np.sqrt(1.0 - alpha[inside] ** 2)
    above = alpha > 1.0
    out[above] = -alpha[above] + np.sqrt(alpha[above] ** 2 - 1.0)
    below = alpha < -1.0
    # written as a quotient to avoid cancellation for large |alpha|
    out[below] = 1.0 / (-alpha[below] + np.sqrt(alpha[below] ** 2 - 1.0))
    return out


def _modes(params: LeadParams, cutoff: tuple[int, int] | None = None):
    my, mz = (params.cutoff_y, params.cutoff_z) if cutoff is None else cutoff
    m, n = np.meshgrid(np.arange(1, my + 1), np.arange(1, mz + 1), indexing="ij")
    return m.ravel(), n.ravel()


def _transverse(m, n, yz, params: LeadParams) -> np.ndarray:
    yz = np.atleast_2d(np.asarray(yz, dtype=float))
    return (np.sin(np.pi * np.outer(m, yz[:, 0]) / params.width_y)
            * np.sin(np.pi * np.outer(n, yz[:, 1]) / params.width_z))


def surface_green(E, r_t, r_s, params: LeadParams, *,
                  cutoff: tuple[int, int] | None = None, return_tail: bool = False):
    """Surface Green's function g(E; r_t, r_s) between two transverse points.

    ``E`` may be an array and ``cutoff`` overrides the (m, n) mode ranges.
    With ``return_tail`` the contribution of the outermost mode shell is
    returned as well, as an estimate of what the truncated tail could change.
    """
    m, n = _modes(params, cutoff)
    E = np.asarray(E, dtype=float)
    alpha = (E[..., None] + params.fermi_energy - mode_energy(m, n, params)) / params.hopping - 1.0
    weight = _transverse(m, n, r_t, params)[:, 0] * _transverse(m, n, r_s, params)[:, 0]
    terms = params.prefactor * weight * retarded_bracket(alpha)
    g = terms.sum(axis=-1)
    if not return_tail:
        return g
    shell = (m == m.max()) | (n == n.max())
    return g, np.abs(terms[..., shell].sum(axis=-1))


class MetalLead:
    """One lead bound to its contact coordinates, with cached mode data."""

    def __init__(self, params: LeadParams):
        if len(params.contact_coords) == 0:
            raise ValueError("lead has no contacts")
        self.params = params
        m, n = _modes(params)
        self._e_mn = mode_energy(m, n, params)
        self._chi = _transverse(m, n, params.contact_coords, params)  # (modes, contacts)
        self._chi.setflags(write=False)

    @property
    def n_contacts(self) -> int:
        return self._chi.shape[1]

    def green_matrix(self, E) -> np.ndarray:
        """g on the contact subspace, shape E.shape + (c, c)."""
        p = self.params
        E = np.asarray(E, dtype=float)
        alpha = (E[..., None] + p.fermi_energy - self._e_mn) / p.hopping - 1.0
        br = retarded_bracket(alpha)                     # (..., modes)
        return p.prefactor * np.einsum("mp,...m,mq->...pq", self._chi, br, self._chi)

    def self_energy(self, E, t_hop: float) -> ContactSelfEnergy:
        sigma = t_hop**2 * self.green_matrix(E)
        return ContactSelfEnergy(sigma, broadening(sigma), E)


def broadening(sigma: np.ndarray) -> np.ndarray:
    """Gamma = 2 pi i (Sigma - Sigma^dagger)."""
    return 2j * np.pi * (sigma - np.swapaxes(sigma, -1, -2).conj())


def self_energy(E, lead: LeadParams, t_hop: float) -> ContactSelfEnergy:
    """Self-energy and broadening of one lead on its contact atoms."""
    return MetalLead(lead).self_energy(E, t_hop)


def check_cutoff(E, params: LeadParams, tol: float = 1e-10) -> float:
    """Largest outermost-shell contribution to any contact element.

    Warns with :class:`ModeCutoffWarning` if it exceeds ``tol``.
    """
    worst = 0.0
    for p in params.contact_coords:
        for q in params.contact_coords:
            _, tail = surface_green(E, p, q, params, return_tail=True)
            worst = max(worst, float(np.max(tail)))
    if worst > tol:
        warnings.warn(
            f"mode sum truncated at ({params.cutoff_y}, {params.cutoff_z}): outer shell "
            f"contributes up to {worst:.3e}", ModeCutoffWarning, stacklevel=2,
        )
    return worst
