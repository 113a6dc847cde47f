"""Electron-nuclear level structure of a single Kramers doublet.

Each doublet of the vanadium centre is modelled as an effective
pseudo-spin 1/2 coupled to the spin-7/2 vanadium nucleus, giving a
16-dimensional Hamiltonian per doublet:

    H = E_k * 1
        + mu_B * B * g_z / 2 * (s_z x 1)
        + (a_zz * (s_z x I_z) + a_xx_yy * (s_x x I_x + s_y x I_y)
           + a_xz * (s_x x I_z + s_z x I_x)) / 2
        + mu_N * g_N * B * (1 x I_z)

with s the Pauli matrices (eigenvalues +-1) and I the nuclear spin
matrices.  All remaining tensor components vanish by the C3v site
symmetry.  Energies are in MHz and the field B is along the symmetry
axis, in Gauss.

Basis convention: pseudo-spin-major ordering |sigma> x |m>.  Indices
0..7 are spin up (sigma = +1) with m ascending from -7/2 to +7/2,
indices 8..15 are spin down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_CONSTANTS, KdParams, SpinConstants

SPIN_UP = +1
SPIN_DOWN = -1


def pauli_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three Pauli matrices as 2x2 complex arrays."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return sx, sy, sz


def nuclear_spin_matrices(i_spin: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin matrices Ix, Iy, Iz for spin quantum number i_spin.

    Basis states |m> are ordered by ascending projection m = -I .. +I.
    Matrix elements follow from the ladder operators:
    <m+1|I+|m> = sqrt(I(I+1) - m(m+1)).
    """
    if i_spin <= 0 or (2 * i_spin) != int(2 * i_spin):
        raise ValueError("spin must be a positive integer or half-integer")
    dim = int(2 * i_spin + 1)
    m = -i_spin + np.arange(dim)
    iz = np.diag(m).astype(complex)
    # raising operator: nonzero on the superdiagonal in ascending-m order
    ladder = np.sqrt(i_spin * (i_spin + 1) - m[:-1] * (m[:-1] + 1))
    iplus = np.zeros((dim, dim), dtype=complex)
    iplus[np.arange(1, dim), np.arange(dim - 1)] = ladder
    iminus = iplus.conj().T
    ix = (iplus + iminus) / 2
    iy = (iplus - iminus) / (2j)
    return ix, iy, iz


@dataclass(frozen=True)
class SpinOperators:
    """Operator set for one doublet, cached per nuclear spin."""

    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_z: np.ndarray
    i_x: np.ndarray
    i_y: np.ndarray
    i_z: np.ndarray
    dim: int
    nuclear_dim: int


def spin_operators(i_spin: float = 3.5) -> SpinOperators:
    sx, sy, sz = pauli_matrices()
    ix, iy, iz = nuclear_spin_matrices(i_spin)
    return SpinOperators(
        sigma_x=sx,
        sigma_y=sy,
        sigma_z=sz,
        i_x=ix,
        i_y=iy,
        i_z=iz,
        dim=2 * ix.shape[0],
        nuclear_dim=ix.shape[0],
    )


def build_kd_hamiltonian(
    params: KdParams,
    b_gauss: float,
    constants: SpinConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Hamiltonian of one doublet at axial field b_gauss, in MHz.

    Returns a Hermitian complex array of shape (2*(2I+1), 2*(2I+1)).
    """
    if not np.isfinite(b_gauss):
        raise ValueError("b_gauss must be finite")
    ops = spin_operators(constants.I)
    n = ops.nuclear_dim
    eye_e = np.eye(2, dtype=complex)
    eye_n = np.eye(n, dtype=complex)

    h = params.E_k * np.eye(2 * n, dtype=complex)
    h += 0.5 * constants.mu_B * b_gauss * params.g_z * np.kron(ops.sigma_z, eye_n)
    h += 0.5 * params.a_zz * np.kron(ops.sigma_z, ops.i_z)
    h += 0.5 * params.a_xx_yy * (
        np.kron(ops.sigma_x, ops.i_x) + np.kron(ops.sigma_y, ops.i_y)
    )
    h += 0.5 * params.a_xz * (
        np.kron(ops.sigma_x, ops.i_z) + np.kron(ops.sigma_z, ops.i_x)
    )
    h += constants.mu_N * constants.g_N * b_gauss * np.kron(eye_e, ops.i_z)
    return h


def hermiticity_defect(h: np.ndarray) -> float:
    """Largest absolute deviation of h from its conjugate transpose."""
    return float(np.max(np.abs(h - h.conj().T)))


def time_reversal_matrix(i_spin: float = 3.5) -> np.ndarray:
    """Unitary part U of the time-inversion operator, acting as U conj(psi).

    U is the product of pi rotations about y for both spins: -i sigma_y
    for the pseudo-spin and the nuclear rotation taking |m> to
    (-1)^(I-m) |-m>.  Conjugating the zero-field Hamiltonian with
    U * complex conjugation leaves it invariant and flips the sign of
    every magnetic term.  Because the combined spin is integer here,
    U conj(U) = +1: time inversion squares to plus one and does not by
    itself force twofold degeneracy.
    """
    sx, sy, sz = pauli_matrices()
    dim = int(2 * i_spin + 1)
    m = -i_spin + np.arange(dim)
    rot = np.zeros((dim, dim), dtype=complex)
    rot[dim - 1 - np.arange(dim), np.arange(dim)] = (-1.0) ** (i_spin - m)
    return np.kron(-1j * sy, rot)


@dataclass(frozen=True)
class HyperfineLevel:
    """One eigenstate of the doublet Hamiltonian.

    energy: eigenvalue in MHz.
    state: 16-component eigenvector in the |sigma> x |m> basis.
    sigma_label: +1 or -1, dominant pseudo-spin projection.
    m_label: dominant nuclear projection.
    """

    energy: float
    state: np.ndarray
    sigma_label: int
    m_label: float


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component real and positive."""
    idx = int(np.argmax(np.abs(vec)))
    pivot = vec[idx]
    if abs(pivot) == 0.0:
        return vec
    return vec * (abs(pivot) / pivot)


def _resolve_degeneracies(
    energies: np.ndarray, vecs: np.ndarray, atol: float
) -> np.ndarray:
    """Rotate degenerate eigenvector groups to a reproducible gauge.

    Within each (near-)degenerate group the returned vectors diagonalise
    the spin-up projector, ordered by ascending up-weight, so that the
    basis inside the group no longer depends on LAPACK internals.
    """
    n = len(energies)
    dim = vecs.shape[0]
    up = np.zeros(dim)
    up[: dim // 2] = 1.0
    out = vecs.copy()
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and energies[stop] - energies[stop - 1] <= atol:
            stop += 1
        if stop - start > 1:
            block = out[:, start:stop]
            # projector weight matrix within the degenerate span
            pw = block.conj().T @ (up[:, None] * block)
            pw = (pw + pw.conj().T) / 2
            _, w = np.linalg.eigh(pw)
            out[:, start:stop] = block @ w
        start = stop
    return out


def eigensystem(
    h: np.ndarray,
    constants: SpinConstants = DEFAULT_CONSTANTS,
    *,
    hermitian_rtol: float = 1e-9,
    degeneracy_atol: float = 1e-6,
) -> list[HyperfineLevel]:
    """Eigenvalues and labelled eigenstates, ascending in energy.

    Raises ValueError when h is not Hermitian within hermitian_rtol
    relative to its largest element.  Labels come from the dominant
    basis-state weight; in degenerate groups the eigenvector gauge is
    first fixed by diagonalising the spin-up projector so that labels
    and phases are deterministic.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = max(float(np.max(np.abs(h))), 1.0)
    if hermiticity_defect(h) > hermitian_rtol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")

    energies, vecs = np.linalg.eigh(h)
    vecs = _resolve_degeneracies(energies, vecs, degeneracy_atol)

    n_nuc = h.shape[0] // 2
    m_values = -((n_nuc - 1) / 2) + np.arange(n_nuc)
    levels = []
    for k in range(h.shape[0]):
        vec = _fix_phase(vecs[:, k])
        idx = int(np.argmax(np.abs(vec) ** 2))
        sigma = SPIN_UP if idx < n_nuc else SPIN_DOWN
        levels.append(
            HyperfineLevel(
                energy=float(energies[k]),
                state=vec,
                sigma_label=sigma,
                m_label=float(m_values[idx % n_nuc]),
            )
        )
    return levels


def kd_levels(
    params: KdParams,
    b_gauss: float,
    constants: SpinConstants = DEFAULT_CONSTANTS,
) -> list[HyperfineLevel]:
    """Convenience wrapper: build the Hamiltonian and diagonalise it."""
    return eigensystem(build_kd_hamiltonian(params, b_gauss, constants), constants)
