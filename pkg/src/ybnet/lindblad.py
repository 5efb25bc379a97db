"""Density matrices and Liouvillian superoperators in row-major vectorization.

With ``vec(rho) = rho.ravel()`` the identity ``vec(A X B) = (A kron B^T) vec(X)``
holds, which is what every builder below relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class DensityMatrix:
    """Density matrix over a labeled basis.

    Attributes:
        basis: Ordered state labels.
        entries: Complex square matrix.
    """

    basis: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self) -> None:
        self.basis = tuple(self.basis)
        self.entries = np.asarray(self.entries, dtype=complex)
        n = len(self.basis)
        if self.entries.shape != (n, n):
            raise ValueError(f"entries shape {self.entries.shape} does not match basis size {n}")

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-9, eig_tol: float = 1e-10) -> None:
        """Raise ``ValueError`` unless the matrix is a physical state."""
        m = self.entries
        if np.max(np.abs(m - m.conj().T), initial=0.0) > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace is {np.trace(m).real:.12g}")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")

    @property
    def dim(self) -> int:
        return len(self.basis)

    def population(self, label: str) -> float:
        i = self.basis.index(label)
        return float(self.entries[i, i].real)

    def vec(self) -> np.ndarray:
        return self.entries.ravel().copy()

    @classmethod
    def from_vec(cls, basis: Sequence[str], v: np.ndarray) -> "DensityMatrix":
        n = len(basis)
        return cls(tuple(basis), np.asarray(v).reshape(n, n))

    @classmethod
    def pure(cls, basis: Sequence[str], psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(tuple(basis), np.outer(psi, psi.conj()))


def left(a: np.ndarray) -> np.ndarray:
    """Superoperator for ``X -> a X``."""
    return np.kron(a, np.eye(a.shape[0]))


def right(b: np.ndarray) -> np.ndarray:
    """Superoperator for ``X -> X b``."""
    return np.kron(np.eye(b.shape[0]), b.T)


def sandwich(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Superoperator for ``X -> a X b^dagger`` (``b`` defaults to ``a``)."""
    b = a if b is None else b
    return np.kron(a, b.conj())


def hamiltonian_part(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``-i[h, X]`` with ``h`` in angular units."""
    return -1j * (left(h) - right(h))


def dissipator(jumps: Sequence[np.ndarray], feed: bool = True) -> np.ndarray:
    """Lindblad dissipator summed over ``jumps``.

    Args:
        jumps: Jump operators with rates folded in (units sqrt(1/s)).
        feed: If False, drop the ``L X L^dagger`` term and keep only the
            anti-commutator. The result then propagates the subspace in
            which none of these jumps happened.
    """
    n = jumps[0].shape[0] if jumps else 0
    out = np.zeros((n * n, n * n), dtype=complex)
    for j in jumps:
        jdj = j.conj().T @ j
        out -= 0.5 * (left(jdj) + right(jdj))
        if feed:
            out += sandwich(j)
    return out


def liouvillian(h: np.ndarray, jumps: Sequence[np.ndarray] = (), counted: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Full Liouvillian with optional no-feed (counted) channels.

    ``jumps`` are traced out normally. ``counted`` jumps contribute only their
    loss term, so the resulting generator is trace-decreasing and describes
    the branch in which no counted jump occurred.
    """
    out = hamiltonian_part(h)
    if jumps:
        out = out + dissipator(jumps, feed=True)
    if counted:
        out = out + dissipator(counted, feed=False)
    return out
