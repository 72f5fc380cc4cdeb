"""Dense complex-matrix kernels: commutators, traces, Hermitian
eigendecomposition, PSD square root.

All functions accept plain numpy arrays. Matrices are square with N <= 64;
the two built-in models use N in {2, 4}.
"""

from __future__ import annotations

import numpy as np
import numpy.linalg as npl

from .errors import PhysicalityError, ValidationError

MAX_DIM = 64


def require_square(a: np.ndarray, name: str = "matrix") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise ValidationError(f"{name} dimension {a.shape[0]} exceeds {MAX_DIM}")


def require_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    require_square(a, "first operand")
    require_square(b, "second operand")
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")


def asym_norm(a: np.ndarray) -> float:
    """Max elementwise deviation of a from its own adjoint."""
    return float(np.max(np.abs(a - a.conj().T)))


def require_hermitian(a: np.ndarray, tol: float = 1e-10, name: str = "matrix") -> None:
    require_square(a, name)
    r = asym_norm(a)
    if r > tol:
        raise ValidationError(f"{name} not Hermitian: asymmetry {r:.3e} > {tol:.1e}")


def hermitianize(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (a + a^dagger) / 2."""
    return 0.5 * (a + a.conj().T)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[a, b] = ab - ba."""
    require_same_dim(a, b)
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """{a, b} = ab + ba."""
    require_same_dim(a, b)
    return a @ b + b @ a


def trace_product(a: np.ndarray, b: np.ndarray) -> complex:
    """Tr(ab) as sum_ij a_ij b_ji, without forming the product."""
    require_same_dim(a, b)
    return complex(np.sum(a * b.T))


def hermitian_eig(h: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvector columns). Each column is
    rephased so its first component of magnitude > 1e-12 is real positive,
    which makes the output deterministic for a fixed input.
    """
    require_hermitian(h, tol)
    w, v = npl.eigh(h)
    v = v.copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            pivot = col[nz[0]]
            col *= np.abs(pivot) / pivot
    return w, v


def psd_sqrt(p: np.ndarray, clamp: float = 1e-9) -> np.ndarray:
    """Hermitian square root of a positive-semidefinite matrix.

    Eigenvalues in [-clamp, 0) are treated as integrator round-off and
    clamped to zero; anything below -clamp raises.
    """
    w, v = hermitian_eig(p)
    if w[0] < -clamp:
        raise PhysicalityError(
            f"matrix not PSD: min eigenvalue {w[0]:.3e} < -{clamp:.1e}")
    w = np.maximum(w, 0.0)
    return hermitianize((v * np.sqrt(w)) @ v.conj().T)
