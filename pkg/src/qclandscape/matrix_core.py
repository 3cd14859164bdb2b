"""Dense complex linear algebra for small su(n) problems.

Matrices are plain ``numpy`` complex arrays.  Generators are stored in
their skew-Hermitian form (``iH`` rather than ``H``), so ``exp(t * A)``
is unitary for real ``t``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# Relative size of the orthogonal remainder that counts as a new direction
# in the Lie closure.
CLOSURE_TOL = 1e-8


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_skew_hermitian(a, tol: float = 1e-12) -> bool:
    a = np.asarray(a, dtype=complex)
    return np.linalg.norm(a + dagger(a)) <= tol * (1.0 + np.linalg.norm(a))


def is_su(a, tol: float = 1e-12) -> bool:
    """True if ``a`` is traceless and skew-Hermitian within ``tol``."""
    a = np.asarray(a, dtype=complex)
    scale = 1.0 + np.linalg.norm(a)
    return is_skew_hermitian(a, tol) and abs(np.trace(a)) <= tol * scale


def unitarity_defect(u) -> float:
    """Frobenius norm of ``U^dagger U - I``."""
    u = np.asarray(u, dtype=complex)
    return float(np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0])))


def project_su(a) -> np.ndarray:
    """Orthogonal projection of an arbitrary matrix onto su(n)."""
    a = np.asarray(a, dtype=complex)
    s = 0.5 * (a - dagger(a))
    return s - np.trace(s) / s.shape[0] * np.eye(s.shape[0])


def expm_skew(a, scale: float = 1.0) -> np.ndarray:
    """Return ``exp(scale * a)`` for skew-Hermitian ``a``.

    The Hermitian matrix ``-i a`` is diagonalised and its eigenvalues are
    mapped onto the unit circle, so the result is unitary to machine
    precision regardless of ``scale``.
    """
    a = _as_square(a, "generator")
    if not np.isfinite(scale):
        raise ValueError("scale must be finite")
    if not is_skew_hermitian(a, 1e-10):
        raise ValueError("generator is not skew-Hermitian")
    if scale == 0:
        return np.eye(a.shape[0], dtype=complex)
    w, v = np.linalg.eigh(-1j * a)
    return (v * np.exp(1j * scale * w)) @ dagger(v)


def trace_inner(a, b) -> float:
    """Real trace inner product ``Re Tr(a^dagger b)``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.real(np.vdot(a, b)))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def _realify(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a.real.ravel(), a.imag.ravel()])


def lie_closure_rank(generators: Sequence[np.ndarray], tol: float = CLOSURE_TOL) -> int:
    """Real dimension of the Lie algebra generated by ``generators``.

    Commutators of every new element with the accumulated basis are added
    whenever their component orthogonal to the current span exceeds
    ``tol`` of their own norm; iteration stops once a full pass adds
    nothing.
    """
    gens = [np.asarray(g, dtype=complex) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    shape = gens[0].shape
    if any(g.shape != shape for g in gens):
        raise ValueError("generators must share a dimension")

    basis_vecs: list[np.ndarray] = []
    basis_mats: list[np.ndarray] = []

    def add(m: np.ndarray, floor: float = 1e-10) -> bool:
        v = _realify(m)
        norm = np.linalg.norm(v)
        # basis elements are normalised, so commutators of size ~eps are rounding noise
        if norm <= floor:
            return False
        r = v.copy()
        for _ in range(2):  # re-orthogonalise once for stability
            for q in basis_vecs:
                r -= np.dot(q, r) * q
        rn = np.linalg.norm(r)
        if rn <= tol * norm:
            return False
        basis_vecs.append(r / rn)
        basis_mats.append(m / norm)
        return True

    frontier = [basis_mats[-1] for m in gens if add(m, 0.0)]
    while frontier:
        new = []
        for x in frontier:
            for y in list(basis_mats):
                c = commutator(x, y)
                if add(c):
                    new.append(basis_mats[-1])
        frontier = new
    return len(basis_vecs)


def random_su_from(rng: np.random.Generator, n: int, target_norm: float = 1.0) -> np.ndarray:
    """Draw a traceless skew-Hermitian matrix from a complex Gaussian ensemble."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not target_norm > 0:
        raise ValueError("target_norm must be positive")
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a = project_su(m)
    return a * (target_norm / np.linalg.norm(a))


def random_su(n: int, seed: int, target_norm: float = 1.0) -> np.ndarray:
    """Seeded random element of su(n) with Frobenius norm ``target_norm``."""
    return random_su_from(np.random.default_rng(seed), n, target_norm)


def random_unitary_from(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-random element of SU(n) via phase-corrected QR."""
    if n < 2:
        raise ValueError("n must be at least 2")
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return to_special(q)


def random_unitary_goal(n: int, seed: int) -> np.ndarray:
    return random_unitary_from(np.random.default_rng(seed), n)


def to_special(u) -> np.ndarray:
    """Remove the determinant phase of a unitary so that ``det = 1``."""
    u = np.asarray(u, dtype=complex)
    det = np.linalg.det(u)
    return u * np.exp(-1j * np.angle(det) / u.shape[0])
