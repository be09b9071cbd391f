"""Retarded device Green's function on the cyclic block-tridiagonal ring.

``solve_recursive`` treats the ring as an open chain plus the two corner
blocks.  The open chain is handled by a forward block elimination (the
left-connected Green's functions ``gL``) followed by back substitution for
the block columns we need, and by the standard backward recursion for the
diagonal blocks.  The corners form a rank <= 2b update
``C = U K U^T`` with ``U = [E_0, E_{n-1}]``; it is folded in with

    G = G0 - (G0 U) K (I + S K)^{-1} (U^T G0),   S = U^T G0 U.

``solve_dense`` factorises the full matrix and serves as the oracle.

Retarded means ``E + i*eta``; advanced quantities are conjugate transposes.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .hamiltonian import BlockHamiltonian
from .leads import ContactSelfEnergy

log = logging.getLogger(__name__)

#: 1-norm condition estimate above which a block pivot counts as broken down.
PIVOT_COND_LIMIT = 1e12

#: Default broadening (eV).  Four steps of the default 5e-5 eV energy grid,
#: so every Lorentzian resonance (FWHM 2 eta) spans about eight samples.
DEFAULT_ETA = 2e-4


class PivotBreakdown(ArithmeticError):
    pass


class SingularSystemError(ArithmeticError):
    def __init__(self, energy):
        super().__init__(f"singular retarded operator at E={energy!r} eV")
        self.energy = energy


@dataclass(eq=False)
class EffectiveSystem:
    """E + i*eta - H - Sigma_L - Sigma_R at one energy."""

    hamiltonian: BlockHamiltonian
    energy: float
    sigma_left: ContactSelfEnergy
    sigma_right: ContactSelfEnergy
    left_indices: np.ndarray
    right_indices: np.ndarray
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        self.left_indices = np.asarray(self.left_indices, dtype=int)
        self.right_indices = np.asarray(self.right_indices, dtype=int)
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        for s in (self.sigma_left, self.sigma_right):
            if not np.allclose(s.energy, self.energy, rtol=0, atol=1e-12):
                raise ValueError("self-energy evaluated at a different energy")

    @property
    def contact_indices(self) -> np.ndarray:
        return np.concatenate([self.left_indices, self.right_indices])

    def dense_matrix(self) -> np.ndarray:
        H = self.hamiltonian.to_dense()
        M = -H
        M[np.diag_indices_from(M)] += self.energy + 1j * self.eta
        for sig, idx in ((self.sigma_left, self.left_indices),
                         (self.sigma_right, self.right_indices)):
            M[np.ix_(idx, idx)] -= sig.sigma
        return M


@dataclass(eq=False)
class GreensResult:
    """Selected blocks of the retarded Green's function at one energy.

    ``contact_columns`` holds the full columns G[:, c] for every contact
    atom c (left contacts first), so ``contact_block`` is its
    contact-row restriction.
    """

    energy: float
    contact_indices: np.ndarray
    contact_columns: np.ndarray
    diag_blocks: np.ndarray | None = None
    n_left: int = 4

    @property
    def contact_block(self) -> np.ndarray:
        return self.contact_columns[self.contact_indices]

    def advanced_contact_block(self) -> np.ndarray:
        return self.contact_block.conj().T


# ----------------------------------------------------------------------
# dense oracle

def solve_dense(sys: EffectiveSystem, *, with_diag: bool = True) -> GreensResult:
    M = sys.dense_matrix()
    try:
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularSystemError
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(M, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(sys.energy) from exc
    if np.any(np.diag(lu[0]) == 0):
        raise SingularSystemError(sys.energy)
    cidx = sys.contact_indices
    rhs = np.zeros((M.shape[0], len(cidx)), dtype=complex)
    rhs[cidx, np.arange(len(cidx))] = 1.0
    cols = sla.lu_solve(lu, rhs)
    diag = None
    if with_diag:
        n, b = sys.hamiltonian.n_layers, sys.hamiltonian.block_size
        full = sla.lu_solve(lu, np.eye(M.shape[0], dtype=complex))
        diag = np.stack([full[i*b:(i+1)*b, i*b:(i+1)*b] for i in range(n)])
    return GreensResult(sys.energy, cidx, cols, diag, len(sys.left_indices))


# ----------------------------------------------------------------------
# recursive solver

def _lead_layer(indices, b) -> tuple[int, np.ndarray]:
    layers = np.unique(indices // b)
    if len(layers) != 1:
        raise ValueError("each lead's contacts must lie within one layer")
    return int(layers[0]), indices % b


def operator_blocks(ham: BlockHamiltonian, energies, eta, sigmas, contacts):
    """Blocks of M = (E + i eta) - H - sum(Sigma) for a batch of energies.

    Returns ``diag`` (B, n, b, b) plus the energy independent couplings
    ``lower`` (M[i+1, i]), ``upper`` (M[i, i+1]), ``corner_up`` (M[0, n-1])
    and ``corner_low`` (M[n-1, 0]).  ``sigmas`` are (B, c, c) arrays on
    atom index lists ``contacts``.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    n, b = ham.n_layers, ham.block_size
    diag = np.broadcast_to(-ham.diag_blocks, (len(energies), n, b, b)).copy()
    z = energies + 1j * eta
    diag[..., np.arange(b), np.arange(b)] += z[:, None, None]
    for sig, idx in zip(sigmas, contacts):
        layer, slots = _lead_layer(np.asarray(idx), b)
        diag[:, layer][:, slots[:, None], slots[None, :]] -= sig
    lower = ham.coupling_blocks                        # -(-V)
    upper = ham.coupling_blocks.conj().transpose(0, 2, 1)
    return diag, lower, upper, ham.corner_block, ham.corner_block.conj().T


def _cond_exceeded(S, Sinv) -> np.ndarray:
    est = np.abs(S).sum(axis=-2).max(axis=-1) * np.abs(Sinv).sum(axis=-2).max(axis=-1)
    return ~np.isfinite(est) | (est > PIVOT_COND_LIMIT)


def _pivot_inverse(S):
    """Batched inverse plus breakdown mask; exactly singular pivots become NaN
    instead of aborting the whole batch."""
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        Sinv = np.empty_like(S)
        for k in range(S.shape[0]):
            try:
                Sinv[k] = np.linalg.inv(S[k])
            except np.linalg.LinAlgError:
                Sinv[k] = np.nan
    return Sinv, _cond_exceeded(S, Sinv)


def _forward(diag, lower, upper, rhs):
    """Left-connected gL_i and the eliminated right-hand sides.

    ``rhs`` maps block index -> (b, m) identity slab (energy independent);
    returns gL (B, n, b, b), r (B, n, b, m) and a per-energy breakdown mask.
    """
    B, n, b, _ = diag.shape
    m = next(iter(rhs.values())).shape[-1]
    gL = np.empty_like(diag)
    r = np.zeros((B, n, b, m), dtype=complex)
    gL[:, 0], bad = _pivot_inverse(diag[:, 0])
    if 0 in rhs:
        r[:, 0] = rhs[0]
    for i in range(1, n):
        P = lower[i - 1] @ gL[:, i - 1]
        S = diag[:, i] - P @ upper[i - 1]
        gL[:, i], brk = _pivot_inverse(S)
        bad |= brk
        r[:, i] = -(P @ r[:, i - 1])
        if i in rhs:
            r[:, i] += rhs[i]
    return gL, r, bad


def _back(gL, upper, r):
    """Back substitution: overwrite r with the solution columns."""
    n = gL.shape[1]
    r[:, n - 1] = gL[:, n - 1] @ r[:, n - 1]
    for i in range(n - 2, -1, -1):
        r[:, i] = gL[:, i] @ (r[:, i] - upper[i] @ r[:, i + 1])
    return r


def _unit_slabs(blocks, b):
    m = b * len(blocks)
    slabs = {}
    for k, j in enumerate(blocks):
        e = np.zeros((b, m), dtype=complex)
        e[:, k*b:(k+1)*b] = np.eye(b)
        slabs[j] = e
    return slabs


def recursive_blocks(diag, lower, upper, corner_up, corner_low, col_blocks,
                     *, with_diag: bool = False):
    """Selected inverse of a batch of cyclic block-tridiagonal matrices.

    Parameters
    ----------
    diag : (B, n, b, b)
    lower, upper : (n-1, b, b)
        M[i+1, i] and M[i, i+1].
    corner_up, corner_low : (b, b)
        M[0, n-1] and M[n-1, 0].
    col_blocks : sequence of int
        Block columns of G to return in full.

    Returns
    -------
    cols : dict block -> (B, n, b, b) block column of G
    diag_G : (B, n, b, b) or None
    bad : (B,) bool mask of energies where a block pivot broke down
    """
    B, n, b, _ = diag.shape
    blocks = sorted(set(col_blocks) | {0, n - 1})
    gL, r, bad = _forward(diag, lower, upper, _unit_slabs(blocks, b))
    X0 = _back(gL, upper, r)                          # open-chain columns
    pos = {j: k for k, j in enumerate(blocks)}

    def col(j):
        return X0[..., pos[j]*b:(pos[j]+1)*b]

    # corner update
    ends = np.concatenate([col(0), col(n - 1)], axis=-1)          # G0[:, {0, n-1}]
    Sm = np.concatenate([ends[:, 0], ends[:, n - 1]], axis=-2)    # (B, 2b, 2b)
    K = np.zeros((2 * b, 2 * b), dtype=complex)
    K[:b, b:] = corner_up
    K[b:, :b] = corner_low
    Y = np.eye(2 * b) + Sm @ K
    rows_ends = np.concatenate([X0[:, 0], X0[:, n - 1]], axis=-2)  # G0[{0,n-1}, J]
    KYZ = K @ np.linalg.solve(Y, rows_ends)                       # (B, 2b, m)
    X = X0 - ends @ KYZ[:, None]
    cols = {j: X[..., pos[j]*b:(pos[j]+1)*b] for j in col_blocks}

    diag_G = None
    if with_diag:
        # rows 0 and n-1 of G0 from the transposed chain, which reuses gL^T
        gLT = gL.transpose(0, 1, 3, 2)
        lowT = upper.transpose(0, 2, 1)
        upT = lower.transpose(0, 2, 1)
        rT = _eliminate(gLT, lowT, _unit_slabs([0, n - 1], b))
        RT = _back(gLT, upT, rT)                     # (B, n, b, 2b): G0^T[:, {0,n-1}]
        rows = RT.transpose(0, 1, 3, 2)              # rows[i] = G0[{0,n-1}, i]
        D0 = np.empty_like(gL)
        D0[:, n - 1] = gL[:, n - 1]
        for i in range(n - 2, -1, -1):
            D0[:, i] = gL[:, i] + gL[:, i] @ upper[i] @ D0[:, i + 1] @ lower[i] @ gL[:, i]
        KY = K @ np.linalg.inv(Y)
        diag_G = D0 - ends @ KY[:, None] @ rows
    return cols, diag_G, bad


def _eliminate(gL, lower, rhs):
    # forward elimination of right-hand sides with gL already known
    B, n, b, _ = gL.shape
    m = next(iter(rhs.values())).shape[-1]
    r = np.zeros((B, n, b, m), dtype=complex)
    if 0 in rhs:
        r[:, 0] = rhs[0]
    for i in range(1, n):
        r[:, i] = -(lower[i - 1] @ (gL[:, i - 1] @ r[:, i - 1]))
        if i in rhs:
            r[:, i] += rhs[i]
    return r


def solve_recursive(sys: EffectiveSystem, *, with_diag: bool = True) -> GreensResult:
    """Recursive counterpart of :func:`solve_dense` (same contract).

    Falls back to the dense solver, with a warning, if a block pivot is
    nearly singular.
    """
    ham = sys.hamiltonian
    b = ham.block_size
    diag, lower, upper, cu, cl = operator_blocks(
        ham, sys.energy, sys.eta,
        [sys.sigma_left.sigma[None], sys.sigma_right.sigma[None]],
        [sys.left_indices, sys.right_indices],
    )
    cidx = sys.contact_indices
    lead_blocks = sorted(set((cidx // b).tolist()))
    cols, dG, bad = recursive_blocks(diag, lower, upper, cu, cl, lead_blocks,
                                     with_diag=with_diag)
    if bad[0]:
        msg = f"block pivot breakdown at E={sys.energy!r}; using dense solver"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return solve_dense(sys, with_diag=with_diag)
    columns = np.stack([cols[c // b][0, :, :, c % b].reshape(-1) for c in cidx], axis=1)
    return GreensResult(sys.energy, cidx, columns,
                        None if dG is None else dG[0], len(sys.left_indices))
