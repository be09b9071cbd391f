"""NEGF transport through a (3,3) carbon nanotorus with two metallic leads.

The package builds the tight-binding Hamiltonian of the torus in a uniform
axial field, folds semi-infinite metallic leads into self-energies, solves
for the needed blocks of the retarded Green's function with a recursive
cyclic block-tridiagonal algorithm, and evaluates density of states,
transmission and Landauer current.
"""

from .device import Device, DeviceConfig
from .greens import EffectiveSystem, GreensResult, solve_dense, solve_recursive
from .hamiltonian import BlockHamiltonian, FieldConfig, HoppingParams, assemble, peierls_phase
from .lattice import TorusGeometry, build_torus, place_leads
from .leads import LeadParams, MetalLead, self_energy, surface_green
from .observables import (BiasConfig, EnergyGrid, FluxConvention, current,
                          density_of_states, flux_ratio, interference_estimate,
                          transmission)

__version__ = "0.1.0"

__all__ = [
    "Device", "DeviceConfig", "EffectiveSystem", "GreensResult", "solve_dense",
    "solve_recursive", "BlockHamiltonian", "FieldConfig", "HoppingParams", "assemble",
    "peierls_phase", "TorusGeometry", "build_torus", "place_leads", "LeadParams",
    "MetalLead", "self_energy", "surface_green", "BiasConfig", "EnergyGrid",
    "FluxConvention", "current", "density_of_states", "flux_ratio",
    "interference_estimate", "transmission",
]
