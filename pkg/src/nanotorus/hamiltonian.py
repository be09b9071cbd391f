"""Cyclic block-tridiagonal tight-binding Hamiltonian with Peierls phases.

Block convention (one block per 12-atom layer)::

    H[i, i]       = A_i
    H[i+1, i]     = -V_i        H[i, i+1]   = -V_i^dagger
    H[0, n-1]     = -V_corner   H[n-1, 0]   = -V_corner^dagger

i.e. ``-V`` always couples a layer into the next one around the ring,
which is also how the corner closes the ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .constants import E_OVER_HBAR
from .lattice import ATOMS_PER_LAYER, site_positions

#: Bonds are atom pairs closer than this (Å); C-C is about 1.4 Å.
NEIGHBOR_CUTOFF = 1.7


@dataclass(frozen=True)
class HoppingParams:
    """Tight-binding energies in eV."""

    v_device: float = -3.1
    t_hop: float = -0.25
    onsite: float = 0.0


@dataclass(frozen=True)
class FieldConfig:
    """Uniform field ``b0`` (T) along +z, in the symmetric gauge."""

    b0: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.b0):
            raise ValueError("b0 must be finite")

    def vector_potential(self, r) -> np.ndarray:
        """A(r) = B/2 * rho * e_phi = B/2 * (-y, x, 0), in T·Å."""
        r = np.asarray(r, dtype=float)
        return 0.5 * self.b0 * np.stack(
            [-r[..., 1], r[..., 0], np.zeros_like(r[..., 0])], axis=-1
        )


def peierls_phase(r_i, r_j, field: FieldConfig) -> complex | np.ndarray:
    """Phase factor multiplying the hopping from site j to site i.

    Evaluated as exp[i e/hbar A(mid) . (r_i - r_j)] with A at the bond
    midpoint, which equals the straight-chord line integral because A is
    linear in position.  Broadcasts over leading axes.
    """
    r_i = np.asarray(r_i, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    a_mid = field.vector_potential(0.5 * (r_i + r_j))
    phase = E_OVER_HBAR * np.sum(a_mid * (r_i - r_j), axis=-1)
    return np.exp(1j * phase)


@dataclass(eq=False)
class BlockHamiltonian:
    diag_blocks: np.ndarray        # (n, b, b)
    coupling_blocks: np.ndarray    # (n-1, b, b); H[i+1, i] = -V_i
    corner_block: np.ndarray       # (b, b);      H[0, n-1] = -V_corner
    b_field: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return self.diag_blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag_blocks.shape[1]

    @property
    def size(self) -> int:
        return self.n_layers * self.block_size

    def to_dense(self) -> np.ndarray:
        n, b = self.n_layers, self.block_size
        H = np.zeros((n * b, n * b), dtype=complex)
        for i in range(n):
            H[i*b:(i+1)*b, i*b:(i+1)*b] += self.diag_blocks[i]
        for i in range(n - 1):
            V = self.coupling_blocks[i]
            H[(i+1)*b:(i+2)*b, i*b:(i+1)*b] += -V
            H[i*b:(i+1)*b, (i+1)*b:(i+2)*b] += -V.conj().T
        Vc = self.corner_block
        H[0:b, (n-1)*b:n*b] += -Vc
        H[(n-1)*b:n*b, 0:b] += -Vc.conj().T
        return H

    def dump(self, path) -> None:
        """Write a text header line followed by raw complex128 blocks.

        Block order is A_0..A_{n-1}, V_0..V_{n-2}, V_corner; each complex
        number is stored as interleaved little-endian (real, imag) float64.
        """
        header = (f"n_layers={self.n_layers} block_size={self.block_size} "
                  f"b_field={self.b_field!r}\n")
        data = np.concatenate([
            self.diag_blocks.ravel(), self.coupling_blocks.ravel(),
            self.corner_block.ravel(),
        ]).astype("<c16")
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(data.tobytes())

    @classmethod
    def load(cls, path) -> "BlockHamiltonian":
        raw = Path(path).read_bytes()
        head, _, body = raw.partition(b"\n")
        fields = dict(item.split("=") for item in head.decode("ascii").split())
        n, b = int(fields["n_layers"]), int(fields["block_size"])
        data = np.frombuffer(body, dtype="<c16").astype(complex)
        nb2 = b * b
        diag = data[: n * nb2].reshape(n, b, b)
        coup = data[n * nb2: (2 * n - 1) * nb2].reshape(n - 1, b, b)
        corner = data[(2 * n - 1) * nb2:].reshape(b, b)
        return cls(diag.copy(), coup.copy(), corner.copy(), float(fields["b_field"]))


def find_bonds(positions: np.ndarray, cutoff: float = NEIGHBOR_CUTOFF) -> np.ndarray:
    """Sorted (i, j) index pairs with i < j closer than ``cutoff``."""
    pairs = cKDTree(positions).query_pairs(r=cutoff, output_type="ndarray")
    pairs = np.sort(pairs, axis=1)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def assemble(sites, params: HoppingParams | None = None,
             field: FieldConfig | None = None, *,
             gauge: Callable[[np.ndarray], np.ndarray] | None = None,
             cutoff: float = NEIGHBOR_CUTOFF,
             bonds: np.ndarray | None = None) -> BlockHamiltonian:
    """Build the device Hamiltonian from atom sites.

    Bonds are found with a distance ``cutoff`` unless given explicitly
    (see :func:`nanotorus.lattice.armchair_bonds`).  ``gauge`` optionally
    adds the gradient of a scalar chi(r) (in T·Å^2) to the vector
    potential, which multiplies each bond by exp[i e/hbar (chi_i - chi_j)].
    """
    params = params or HoppingParams()
    field = field or FieldConfig()
    pos = site_positions(sites)
    layer = np.array([s.layer for s in sites])
    slot = np.array([s.slot for s in sites])
    n = int(layer.max()) + 1
    b = ATOMS_PER_LAYER
    if len(sites) != n * b:
        raise ValueError("site list is not a complete torus")

    bonds = find_bonds(pos, cutoff) if bonds is None else np.asarray(bonds)
    degree = np.bincount(bonds.ravel(), minlength=len(sites))
    if np.any(degree != 3):
        bad = np.flatnonzero(degree != 3)[:5]
        raise ValueError(f"neighbour graph is not 3-regular (e.g. sites {bad.tolist()})")

    i, j = bonds[:, 0], bonds[:, 1]
    hop = params.v_device * peierls_phase(pos[i], pos[j], field)
    if gauge is not None:
        chi = np.asarray(gauge(pos), dtype=float)
        hop = hop * np.exp(1j * E_OVER_HBAR * (chi[i] - chi[j]))

    diag = np.zeros((n, b, b), dtype=complex)
    diag[:, np.arange(b), np.arange(b)] = params.onsite
    coupling = np.zeros((n - 1, b, b), dtype=complex)
    corner = np.zeros((b, b), dtype=complex)

    for bi, bj, val in zip(i, j, hop):
        li, lj = layer[bi], layer[bj]
        si, sj = slot[bi], slot[bj]
        # val is H[bi, bj]; conj(val) is H[bj, bi]
        if li == lj:
            diag[li, si, sj] += val
            diag[li, sj, si] += np.conj(val)
        elif li == (lj + 1) % n:
            # bi sits in the layer after bj
            _add_forward(coupling, corner, lj, si, sj, val, n)
        elif lj == (li + 1) % n:
            _add_forward(coupling, corner, li, sj, si, np.conj(val), n)
        else:
            raise ValueError(
                f"bond {bi}-{bj} spans non-adjacent layers {li} and {lj}"
            )

    return BlockHamiltonian(
        diag, coupling, corner, b_field=field.b0,
        meta={"peierls_point": "bond midpoint (straight chord)",
              "neighbor_cutoff_A": cutoff, "n_bonds": len(bonds)},
    )


def _add_forward(coupling, corner, prev_layer, s_next, s_prev, h_val, n):
    # h_val = H[next, prev] = -V_prev[s_next, s_prev]
    if prev_layer == n - 1:
        corner[s_next, s_prev] -= h_val
    else:
        coupling[prev_layer, s_next, s_prev] -= h_val
