"""Density of states, transmission, current and related estimates.

Broadening matrices follow Gamma = 2 pi i (Sigma - Sigma^dagger), and the
density of states is the site diagonal of G (Gamma_L + Gamma_R) G^dagger
with no further normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit

from .constants import HBAR2_OVER_2ME
from .greens import GreensResult
from .leads import ContactSelfEnergy

#: Transmissions above -T_CLAMP_TOL are clamped to >= 0; below that they flag a failure.
T_CLAMP_TOL = 1e-12


class NegativeTransmissionError(ArithmeticError):
    pass


class GridCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class BiasConfig:
    """Symmetric bias: mu_L = +V/2, mu_R = -V/2 (eV)."""

    v_sd: float
    kT: float = 0.030

    def __post_init__(self):
        if self.kT <= 0:
            raise ValueError("kT must be positive")

    @property
    def mu_left(self) -> float:
        return 0.5 * self.v_sd

    @property
    def mu_right(self) -> float:
        return self.mu_left - self.v_sd


@dataclass(frozen=True)
class EnergyGrid:
    e_min: float = -0.2
    e_max: float = 0.2
    step: float = 5e-5

    def __post_init__(self):
        if not (self.e_max >= self.e_min and self.step > 0):
            raise ValueError("need e_max >= e_min and step > 0")
        n = (self.e_max - self.e_min) / self.step
        if abs(n - round(n)) > 1e-6:
            raise ValueError("energy range is not a whole number of steps")

    @property
    def n_points(self) -> int:
        return int(round((self.e_max - self.e_min) / self.step)) + 1

    def energies(self) -> np.ndarray:
        # integer multiples keep E = 0 exact on symmetric grids
        return self.e_min + self.step * np.arange(self.n_points)


@dataclass(frozen=True)
class FluxConvention:
    """Field per flux quantum used to label flux axes (T)."""

    b_per_phi0: float = 0.026

    def __post_init__(self):
        if self.b_per_phi0 <= 0:
            raise ValueError("b_per_phi0 must be positive")


def _check_energy(G: GreensResult, *gammas: ContactSelfEnergy):
    for g in gammas:
        if not np.allclose(g.energy, G.energy, rtol=0, atol=1e-12):
            raise ValueError(
                f"Green's function at E={G.energy} but broadening at E={g.energy}"
            )


def _joint_gamma(gl: np.ndarray, gr: np.ndarray) -> np.ndarray:
    nl, nr = gl.shape[-1], gr.shape[-1]
    out = np.zeros(gl.shape[:-2] + (nl + nr, nl + nr), dtype=complex)
    out[..., :nl, :nl] = gl
    out[..., nl:, nl:] = gr
    return out


def site_density(columns: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """diag(G Gamma G^dagger) from the contact columns of G.

    ``columns`` is (..., N, c) and ``gamma`` (..., c, c) on the same
    contacts; returns (..., N).
    """
    return np.einsum("...ip,...pq,...iq->...i", columns, gamma, columns.conj()).real


def density_of_states(G: GreensResult, gamma_left: ContactSelfEnergy,
                      gamma_right: ContactSelfEnergy):
    """Site-resolved D(E) and its total, in 1/eV."""
    _check_energy(G, gamma_left, gamma_right)
    gamma = _joint_gamma(gamma_left.gamma, gamma_right.gamma)
    per_site = site_density(G.contact_columns, gamma)
    return per_site, float(per_site.sum())


def transmission_from_block(g_lr: np.ndarray, gamma_l: np.ndarray,
                            gamma_r: np.ndarray) -> np.ndarray:
    """Tr[Gamma_L G_LR Gamma_R G_LR^dagger], batched over leading axes.

    ``g_lr`` is the left-row, right-column block of the retarded G.
    Values in [-T_CLAMP_TOL, 0) are clamped to zero.
    """
    t = np.einsum("...ab,...bc,...cd,...ad->...", gamma_l, g_lr, gamma_r, g_lr.conj())
    if np.any(np.abs(t.imag) > 1e-8 * np.maximum(np.abs(t.real), 1e-300) + T_CLAMP_TOL):
        raise NegativeTransmissionError("transmission has a non-negligible imaginary part")
    t = t.real
    if np.any(t < -T_CLAMP_TOL):
        raise NegativeTransmissionError(f"negative transmission {t.min():.3e}")
    return np.maximum(t, 0.0)


def transmission(G: GreensResult, gamma_left: ContactSelfEnergy,
                 gamma_right: ContactSelfEnergy) -> float:
    """T(E) on the joint 8-dimensional contact subspace."""
    _check_energy(G, gamma_left, gamma_right)
    block = G.contact_block
    nl = G.n_left
    return float(transmission_from_block(block[:nl, nl:], gamma_left.gamma, gamma_right.gamma))


def fermi(E, mu, kT):
    """Fermi-Dirac occupation 1 / (exp((E - mu)/kT) + 1)."""
    if kT <= 0:
        raise ValueError("kT must be positive")
    return expit(-(np.asarray(E, dtype=float) - mu) / kT)


def required_range(bias: BiasConfig, margin_kT: float = 5.0) -> tuple[float, float]:
    lo = min(bias.mu_left, bias.mu_right) - margin_kT * bias.kT
    hi = max(bias.mu_left, bias.mu_right) + margin_kT * bias.kT
    return lo, hi


def current(energies, T, bias: BiasConfig, *, margin_kT: float = 5.0) -> float:
    """Landauer current in units of (2e/h)·eV by the trapezoidal rule.

    The grid must cover both chemical potentials plus ``margin_kT`` thermal
    energies on either side.
    """
    E = np.asarray(energies, dtype=float)
    T = np.asarray(T, dtype=float)
    if bias.v_sd == 0:
        return 0.0
    lo, hi = required_range(bias, margin_kT)
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    if E[0] > lo + tol or E[-1] < hi - tol:
        raise GridCoverageError(
            f"energy grid [{E[0]}, {E[-1]}] does not cover required [{lo}, {hi}] eV"
        )
    window = fermi(E, bias.mu_left, bias.kT) - fermi(E, bias.mu_right, bias.kT)
    return float(trapezoid(T * window, E))


def flux_ratio(b, conv: FluxConvention = FluxConvention()):
    """Phi / Phi_0 under the field-per-flux-quantum convention."""
    r = np.asarray(b, dtype=float) / conv.b_per_phi0
    return float(r) if r.ndim == 0 else r


def interference_estimate(E: float, R: float) -> tuple[float, float]:
    """Free-electron wavelength (nm) and angular spacing of minima (deg).

    ``E`` in eV, ``R`` the major radius in Å.  Minima in the two-branch
    interference repeat whenever the path difference grows by half a
    wavelength.
    """
    if E <= 0:
        raise ValueError("energy must be positive")
    k = np.sqrt(E / HBAR2_OVER_2ME)             # 1/Å
    lam = 2 * np.pi / k                         # Å
    delta_alpha = 360.0 * (lam / 2) / (2 * np.pi * R)
    return float(lam / 10.0), float(delta_alpha)
