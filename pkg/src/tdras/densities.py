"""Reduced density matrices and the P1-P2 coupling tensors of the S/SD/SDT schemes.

Index conventions (all arrays are 0-based over the M orbitals)::

    rho1[i, j]       = <Psi| E_i^j |Psi>          = <c+_i c_j>
    rho2[i, j, k, l] = <Psi| E_{ik}^{jl} |Psi>    = <c+_i c+_k c_l c_j>
    v2[p, q, r, s]   = int int phi_p* phi_r* v phi_q phi_s

so that the energy is ``sum(h * rho1) + 0.5 * sum(v2 * rho2)`` with matching
index positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .fock import FockSpace, InvalidScheme, effective_one_body


@dataclass(frozen=True)
class DensitySet:
    rho1: np.ndarray
    rho2: np.ndarray
    time: float = 0.0

    def check(self, n_electrons: int, atol: float = 1e-10) -> None:
        """Raise AssertionError when the basic sum rules are violated."""
        r1, r2 = self.rho1, self.rho2
        norm = np.trace(r1).real / n_electrons
        assert abs(np.trace(r1) - n_electrons * norm) < atol
        assert np.allclose(r1, r1.conj().T, atol=atol)
        partial = np.einsum("ijkk->ij", r2)
        assert np.allclose(partial, (n_electrons - 1) * r1, atol=atol)


def excitation_stack(c_mat: np.ndarray, space: FockSpace) -> np.ndarray:
    """D[p*M + q] = E_p^q C over the full string product."""
    return kernels.excite_all(c_mat, space.table)


def density_matrices(c_mat: np.ndarray, space: FockSpace, d=None, time: float = 0.0) -> DensitySet:
    """One- and two-body densities of the (unnormalized) CI matrix ``c_mat``."""
    M = space.n_orbitals
    if d is None:
        d = excitation_stack(c_mat, space)
    flat = d.reshape(M * M, -1)
    rho1 = (flat @ c_mat.ravel().conj()).reshape(M, M)
    # overlap[ji, kl] = <E_j^i C | E_k^l C> = <C| E_i^j E_k^l |C>
    overlap = (flat.conj() @ flat.T).reshape(M, M, M, M)
    rho2 = overlap.transpose(1, 0, 2, 3).copy()
    idx = np.arange(M)
    rho2[:, idx, idx, :] -= rho1[:, None, :]
    return DensitySet(rho1, rho2, time)


def energy_from_densities(h: np.ndarray, v2: np.ndarray, dens: DensitySet) -> complex:
    return np.sum(h * dens.rho1) + 0.5 * np.sum(v2 * dens.rho2)


def a_tensor_apply(rho1: np.ndarray, block: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Contract A^{l' j}_{k i'} = delta_jk rho1[i', l'] - delta_i'l' rho1[k, j] with a block.

    ``block[k, l']`` is indexed by ``rows`` (k) and ``cols`` (l'); the output
    ``out[i', j]`` is indexed by ``cols`` (i') and ``rows`` (j)::

        out[i', j] = sum_l' block[j, l'] rho1[i', l'] - sum_k block[k, i'] rho1[k, j]
    """
    r_cc = rho1[np.ix_(cols, cols)]
    r_rr = rho1[np.ix_(rows, rows)]
    return r_cc @ block.T - block.T @ r_rr


def commutator_two_body(v2: np.ndarray, rho2: np.ndarray) -> np.ndarray:
    """V[i, j] = <[E_i^j, 1/2 sum v E2]> expressed through rho2."""
    t1 = np.einsum("jkml,ikml->ij", v2, rho2)
    t2 = np.einsum("kilm,kjlm->ij", v2, rho2)
    return t1 - t2


def _pair_sets(space: FockSpace):
    """Orbital pairs (p, q) whose E_p^q does not lower the excitation level."""
    sub = space.scheme.subspace_of()
    M = space.n_orbitals
    raise_pairs, keep_pairs = [], []
    for p in range(M):
        for q in range(M):
            dp, dq = sub[p] == 2, sub[q] == 2
            if dp and not dq:
                raise_pairs.append(p * M + q)
            elif dp == dq:
                keep_pairs.append(p * M + q)
    return np.array(raise_pairs, dtype=int), np.array(keep_pairs, dtype=int)


def _coupling_pairs(space: FockSpace):
    sub = space.scheme.subspace_of()
    p1 = np.nonzero(sub == 1)[0]
    p2 = np.nonzero(sub == 2)[0]
    return p1, p2


def zeta4(c_mat: np.ndarray, space: FockSpace, d=None) -> np.ndarray:
    """zeta[i', j, k, l'] = <E_j^{i'} Psi | (1 - Pi) E_k^{l'} Psi>, i', l' in P1 and j, k in P2."""
    if not space.scheme.has_p_coupling:
        raise InvalidScheme("coupling tensors exist only for S/SD/SDT schemes")
    M = space.n_orbitals
    p1, p2 = _coupling_pairs(space)
    if d is None:
        d = excitation_stack(c_mat, space)
    mask = space.outer_mask.ravel()
    ups = d.reshape(M, M, -1)[np.ix_(p2, p1)][..., mask]  # [j, i', cfg] = E_j^i' C
    z = np.einsum("jax,kbx->ajkb", ups.conj(), ups)
    return z


def p_coupling_rhs(c_mat: np.ndarray, space: FockSpace, v2: np.ndarray, d=None) -> np.ndarray:
    """RHS[i', j] = <E_j^{i'} Psi | (1 - Pi) 1/2 sum v E2 |Psi> for i' in P1, j in P2.

    Only the top two excitation sectors of ``c_mat`` and non-lowering pair
    operators can reach the sector just above the RAS space, so the
    contraction is restricted to those.
    """
    if not space.scheme.has_p_coupling:
        raise InvalidScheme("coupling tensors exist only for S/SD/SDT schemes")
    M = space.n_orbitals
    ns = space.n_strings
    top = space.scheme.max_excite
    p1, p2 = _coupling_pairs(space)
    if d is None:
        d = excitation_stack(c_mat, space)
    mask = space.outer_mask

    c_top = c_mat * (space.level_matrix >= top - 1)
    d_top = d * (space.level_matrix >= top - 1)
    raise_pairs, keep_pairs = _pair_sets(space)
    rs = np.concatenate([raise_pairs, keep_pairs])
    v = v2.reshape(M * M, M * M)
    v_eff = effective_one_body(np.zeros((M, M)), v2).reshape(M * M)
    # G[pq] for the outer E_p^q: needs only pairs that can end above the space
    g = np.zeros((M * M, ns, ns), dtype=complex)
    g[raise_pairs] = 0.5 * (v[np.ix_(raise_pairs, rs)] @ d_top[rs].reshape(len(rs), -1)).reshape(-1, ns, ns)
    g[raise_pairs] += v_eff[raise_pairs, None, None] * c_top[None]
    g[keep_pairs] = 0.5 * (v[np.ix_(keep_pairs, raise_pairs)] @ d_top[raise_pairs].reshape(len(raise_pairs), -1)).reshape(
        -1, ns, ns
    )
    sig = kernels.deexcite_sum(g, space.table) * mask
    ups = d.reshape(M, M, ns, ns)[np.ix_(p2, p1)] * mask  # [j, i'] = E_j^i' C above the space
    return np.einsum("jaxy,xy->aj", ups.conj(), sig)


def p_coupling_rhs_full(c_mat: np.ndarray, space: FockSpace, v2: np.ndarray, d=None) -> np.ndarray:
    """Same quantity as :func:`p_coupling_rhs` from the unrestricted contraction."""
    M = space.n_orbitals
    ns = space.n_strings
    p1, p2 = _coupling_pairs(space)
    if d is None:
        d = excitation_stack(c_mat, space)
    from .fock import sigma

    sig = sigma(c_mat, space, np.zeros((M, M)), v2, d=d) * space.outer_mask
    ups = d.reshape(M, M, ns, ns)[np.ix_(p2, p1)] * space.outer_mask
    return np.einsum("jaxy,xy->aj", ups.conj(), sig)
