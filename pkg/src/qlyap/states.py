"""Density matrices, pure states, and the Uhlmann fidelity.

States are plain numpy arrays: a pure state is a length-N complex vector,
a density matrix an N x N complex array. Physicality is checked, never
silently repaired; integrators are expected to fail loudly instead of
renormalizing.
"""

from __future__ import annotations

import numpy as np
import numpy.linalg as npl

from .errors import PhysicalityError, ValidationError
from .linalg import (asym_norm, hermitian_eig, psd_sqrt, require_same_dim,
                     require_square, trace_product)

# construction-time norms are strict, trajectory-time tolerances loose
PURE_NORM_TOL = 1e-10
HERM_TOL = 1e-9
TRACE_TOL = 1e-6
EIG_FLOOR = -1e-6


def check_pure_state(psi: np.ndarray, tol: float = PURE_NORM_TOL) -> None:
    if psi.ndim != 1:
        raise ValidationError(f"pure state must be a vector, got shape {psi.shape}")
    n = float(npl.norm(psi))
    if abs(n - 1.0) > tol:
        raise ValidationError(f"pure state not normalized: |psi| = {n:.12f}")


def check_density_matrix(rho: np.ndarray,
                         herm_tol: float = HERM_TOL,
                         trace_tol: float = TRACE_TOL,
                         eig_floor: float = EIG_FLOOR) -> None:
    """Raise unless rho is Hermitian, unit trace, and PSD within tolerance."""
    require_square(rho, "density matrix")
    a = asym_norm(rho)
    if a > herm_tol:
        raise PhysicalityError(f"density matrix asymmetry {a:.3e} > {herm_tol:.1e}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        raise PhysicalityError(f"density matrix trace {tr:.12f} off unity "
                               f"by more than {trace_tol:.1e}")
    wmin = float(npl.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    if wmin < eig_floor:
        raise PhysicalityError(f"density matrix min eigenvalue {wmin:.3e} "
                               f"< {eig_floor:.1e}")


def project(psi: np.ndarray) -> np.ndarray:
    """|psi><psi| for a normalized pure state."""
    psi = np.asarray(psi, dtype=complex)
    check_pure_state(psi)
    return np.outer(psi, psi.conj())


def purity(rho: np.ndarray) -> float:
    """Tr(rho^2)."""
    return trace_product(rho, rho).real


def population(rho: np.ndarray, psi: np.ndarray) -> float:
    """<psi| rho |psi>, the probability of finding rho in state psi."""
    check_pure_state(psi)
    require_square(rho, "density matrix")
    if rho.shape[0] != psi.shape[0]:
        raise ValidationError(f"dimension mismatch: rho {rho.shape} vs "
                              f"psi {psi.shape}")
    val = complex(psi.conj() @ rho @ psi)
    if abs(val.imag) > 1e-10:
        raise PhysicalityError(f"population has imaginary residue {val.imag:.3e}")
    return val.real


def _is_pure(rho: np.ndarray, tol: float = 1e-10) -> bool:
    return abs(purity(rho) - 1.0) < tol


def fidelity(target: np.ndarray, actual: np.ndarray, validate: bool = True) -> float:
    """Uhlmann fidelity F = Tr sqrt(sqrt(target) actual sqrt(target)).

    When either argument is pure the rank-1 fast path
    F = sqrt(Tr(target actual)) is used; the general path goes through two
    PSD square roots. Symmetric in its arguments within 1e-8.
    """
    require_same_dim(target, actual)
    if validate:
        check_density_matrix(target)
        check_density_matrix(actual)
    if _is_pure(target) or _is_pure(actual):
        val = trace_product(target, actual).real
        return float(np.sqrt(max(val, 0.0)))
    s = psd_sqrt(target)
    w, _ = hermitian_eig(np.asarray(s @ actual @ s), tol=1e-8)
    return float(np.sum(np.sqrt(np.maximum(w, 0.0))))
