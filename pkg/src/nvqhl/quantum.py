"""Dense linear algebra for small spin-1 chains.

Basis order per site is (|+1>, |0>, |-1>); site 1 is the leftmost tensor
factor, so the joint index of (m_1, ..., m_M) is the base-3 number whose most
significant digit belongs to site 1 (digit 0 = |+1>, 1 = |0>, 2 = |-1>).

Operators and states are plain numpy arrays.  Everything here is a pure
function; inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-12
EIGEN_TOL = 1e-10
UNITARY_TOL = 1e-9
IMAG_TOL = 1e-8


class ModelError(ValueError):
    """Raised when an operator violates a structural requirement."""


class NumericError(ArithmeticError):
    """Raised when a numerical result is inconsistent (e.g. complex expectation)."""


@lru_cache(maxsize=None)
def _site_ops() -> dict[str, np.ndarray]:
    s = 1.0 / np.sqrt(2.0)
    sx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = s * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    p_plus = np.diag([1.0, 0.0, 0.0]).astype(complex)
    p_zero = np.diag([0.0, 1.0, 0.0]).astype(complex)
    p_minus = np.diag([0.0, 0.0, 1.0]).astype(complex)
    xeff = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex)
    ops = {"Sx": sx, "Sy": sy, "Sz": sz, "P+1": p_plus, "P0": p_zero,
           "P-1": p_minus, "Xeff": xeff, "I": np.eye(3, dtype=complex)}
    for op in ops.values():
        op.setflags(write=False)
    return ops


def spin1_site_ops() -> dict[str, np.ndarray]:
    """Return the single-site spin-1 operators as 3x3 complex arrays.

    Keys: ``Sx``, ``Sy``, ``Sz``, ``P+1``, ``P0``, ``P-1``, ``Xeff`` and ``I``.
    ``Xeff`` is |+1><0| + |0><+1|, a Pauli-X on the sensing pair.
    The arrays are read-only.
    """
    return dict(_site_ops())


def _check_dims(op: np.ndarray) -> None:
    if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] < 1:
        raise ValueError(f"operator must be square, got shape {op.shape}")


def kron_embed(op: np.ndarray, site: int, M: int) -> np.ndarray:
    """Embed a 3x3 operator at ``site`` (1-based) of an ``M``-site chain."""
    if M < 1 or not 1 <= site <= M:
        raise ValueError(f"site {site} out of range 1..{M}")
    op = np.asarray(op)
    if op.shape != (3, 3):
        raise ValueError("site operator must be 3x3")
    left = np.eye(3 ** (site - 1))
    right = np.eye(3 ** (M - site))
    return np.kron(np.kron(left, op), right)


def two_site_embed(op_a: np.ndarray, op_b: np.ndarray, q: int, r: int, M: int) -> np.ndarray:
    """Embed ``op_a`` at site ``q`` and ``op_b`` at site ``r`` (1 <= q < r <= M)."""
    if not 1 <= q < r <= M:
        raise ValueError(f"need 1 <= q < r <= M, got q={q}, r={r}, M={M}")
    out = np.eye(1)
    for site in range(1, M + 1):
        if site == q:
            factor = op_a
        elif site == r:
            factor = op_b
        else:
            factor = np.eye(3)
        out = np.kron(out, factor)
    return out


def hermiticity_residual(H: np.ndarray) -> float:
    H = np.asarray(H)
    return float(np.max(np.abs(H - np.swapaxes(H, -1, -2).conj()))) if H.size else 0.0


@dataclass(frozen=True)
class HermitianEigen:
    """Spectral decomposition H = V diag(w) V^dagger with ascending ``w``.

    Arrays may carry leading batch dimensions.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[-1]


def hermitian_eigen(H: np.ndarray, tol: float = HERMITIAN_TOL) -> HermitianEigen:
    """Diagonalise a Hermitian matrix (or a stack of them).

    The Hermiticity check is relative to ``max(1, max|H|)``.  Real symmetric
    input stays real, which roughly halves the LAPACK cost.
    """
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if hermiticity_residual(H) > tol * scale:
        raise ModelError("matrix is not Hermitian within tolerance")
    w, v = np.linalg.eigh(H)
    return HermitianEigen(w, v)


def evolve(eig: HermitianEigen, T: float) -> np.ndarray:
    """Unitary exp(-i T H) from a cached decomposition."""
    if T < 0:
        raise ValueError("evolution time must be non-negative")
    phases = np.exp(-1j * eig.eigenvalues * T)
    V = eig.eigenvectors
    return (V * phases[..., None, :]) @ np.swapaxes(V, -1, -2).conj()


def evolve_state(eig: HermitianEigen, psi0: np.ndarray, T: float) -> np.ndarray:
    """exp(-i T H) psi0 without forming the unitary. Batches broadcast."""
    if T < 0:
        raise ValueError("evolution time must be non-negative")
    V = eig.eigenvectors
    coeff = np.einsum("...ji,...j->...i", V.conj(), psi0)
    return np.einsum("...ij,...j->...i", V, coeff * np.exp(-1j * eig.eigenvalues * T))


def apply(U: np.ndarray, psi: np.ndarray) -> np.ndarray:
    U = np.asarray(U)
    psi = np.asarray(psi)
    if U.shape[-1] != psi.shape[-1]:
        raise ValueError(f"dimension mismatch: operator {U.shape}, state {psi.shape}")
    return U @ psi


def expectation(psi: np.ndarray, O: np.ndarray) -> float:
    """<psi|O|psi> for Hermitian ``O``; complex residue above 1e-8 is an error."""
    psi = np.asarray(psi)
    O = np.asarray(O)
    if O.shape != (psi.shape[-1], psi.shape[-1]):
        raise ValueError("dimension mismatch between state and operator")
    val = np.vdot(psi, O @ psi)
    if abs(val.imag) > IMAG_TOL:
        raise NumericError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (A + A.conj().T) / 2
