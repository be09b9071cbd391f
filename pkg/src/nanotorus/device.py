"""A torus with two attached leads, ready for transport calculations."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .greens import (DEFAULT_ETA, EffectiveSystem, GreensResult, operator_blocks,
                     recursive_blocks, solve_dense, solve_recursive)
from .hamiltonian import FieldConfig, HoppingParams, assemble
from .lattice import (ATOMS_PER_LAYER, TorusGeometry, armchair_bonds,
                      build_torus, contact_frame, place_leads)
from .leads import ContactSelfEnergy, LeadParams, MetalLead
from .observables import site_density, transmission_from_block

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeviceConfig:
    """Everything except the swept parameters (field, angle, coupling)."""

    geometry: TorusGeometry = field(default_factory=TorusGeometry)
    hopping: HoppingParams = field(default_factory=HoppingParams)
    lead: LeadParams = field(default_factory=LeadParams)
    eta: float = DEFAULT_ETA


class Device:
    """Torus + leads at one (B, alpha, t_hop).

    Lead contact coordinates come from projecting the contact atoms onto a
    flat lead face, unless ``config.lead`` already carries them.
    """

    def __init__(self, config: DeviceConfig, b0: float = 0.0, alpha: float = 180.0,
                 t_hop: float | None = None, *, angle_range=None):
        self.config = config
        self.geometry = config.geometry
        self.sites = build_torus(self.geometry)
        self.placement = place_leads(self.sites, alpha, angle_range=angle_range)
        self.t_hop = config.hopping.t_hop if t_hop is None else t_hop
        self.b0 = b0
        # topological bonds also cover toy rings far from physical proportions
        self.hamiltonian = assemble(self.sites, config.hopping, FieldConfig(b0),
                                    bonds=armchair_bonds(self.geometry.n_layers))
        lp = config.lead
        if lp.contact_coords:
            left = right = lp
        else:
            left = lp.with_contacts(contact_frame(self.placement.contact_sites_left, self.geometry))
            right = lp.with_contacts(contact_frame(self.placement.contact_sites_right, self.geometry))
        self.lead_left = MetalLead(left)
        self.lead_right = MetalLead(right)

    @property
    def alpha(self) -> float:
        return self.placement.alpha

    @property
    def eta(self) -> float:
        return self.config.eta

    def self_energies(self, E) -> tuple[ContactSelfEnergy, ContactSelfEnergy]:
        return (self.lead_left.self_energy(E, self.t_hop),
                self.lead_right.self_energy(E, self.t_hop))

    def system(self, E: float) -> EffectiveSystem:
        sl, sr = self.self_energies(E)
        return EffectiveSystem(self.hamiltonian, E, sl, sr,
                               self.placement.left_indices,
                               self.placement.right_indices, self.eta)

    def greens(self, E: float, *, method: str = "recursive", with_diag: bool = True) -> GreensResult:
        solver = solve_recursive if method == "recursive" else solve_dense
        return solver(self.system(E), with_diag=with_diag)

    def spectrum(self, energies, *, with_dos: bool = True, chunk: int = 64,
                 return_columns: bool = False) -> dict:
        """T(E) and total D(E) on a batch of energies.

        Energies are processed in fixed-size chunks, so results do not depend
        on how a sweep is split across workers.
        """
        E = np.atleast_1d(np.asarray(energies, dtype=float))
        T = np.empty(len(E))
        D = np.empty(len(E)) if with_dos else None
        cols_out = [] if return_columns else None
        for start in range(0, len(E), chunk):
            sl = slice(start, start + chunk)
            t, d, cols = self._chunk(E[sl], with_dos)
            T[sl] = t
            if with_dos:
                D[sl] = d
            if return_columns:
                cols_out.append(cols)
        out = {"energy": E, "T": T}
        if with_dos:
            out["D_total"] = D
        if return_columns:
            out["columns"] = np.concatenate(cols_out)
        return out

    def _chunk(self, E, with_dos):
        b = ATOMS_PER_LAYER
        sig_l, sig_r = self.self_energies(E)
        li, ri = self.placement.left_indices, self.placement.right_indices
        diag, lower, upper, cu, cl = operator_blocks(
            self.hamiltonian, E, self.eta, [sig_l.sigma, sig_r.sigma], [li, ri])
        lb, rb = self.placement.left_layer, self.placement.right_layer
        cols, _, bad = recursive_blocks(diag, lower, upper, cu, cl, [lb, rb])
        # (B, N, 8) full contact columns, left contacts first
        columns = np.concatenate([
            cols[lb][..., li % b].reshape(len(E), -1, len(li)),
            cols[rb][..., ri % b].reshape(len(E), -1, len(ri)),
        ], axis=-1)
        for k in np.flatnonzero(bad):
            msg = f"block pivot breakdown at E={E[k]!r}; using dense solver"
            log.warning(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            columns[k] = solve_dense(self.system(float(E[k])), with_diag=False).contact_columns
        g_lr = columns[:, li, len(li):]
        T = transmission_from_block(g_lr, sig_l.gamma, sig_r.gamma)
        D = None
        if with_dos:
            gamma = np.zeros((len(E), len(li) + len(ri), len(li) + len(ri)), dtype=complex)
            gamma[:, :len(li), :len(li)] = sig_l.gamma
            gamma[:, len(li):, len(li):] = sig_r.gamma
            D = site_density(columns, gamma).sum(axis=-1)
        return T, D, columns


def with_lead(config: DeviceConfig, **changes) -> DeviceConfig:
    return replace(config, lead=replace(config.lead, **changes))
