from __future__ import annotations

import numpy as np
import pytest

from qlyap import (PhysicalityError, ValidationError, fidelity, population,
                   project, purity)
from qlyap.states import check_density_matrix, check_pure_state


def test_check_pure_state():
    check_pure_state(np.array([1.0, 0.0]))
    check_pure_state(np.array([1.0, 1.0j]) / np.sqrt(2))
    with pytest.raises(ValidationError, match="not normalized"):
        check_pure_state(np.array([1.0, 1.0]))
    with pytest.raises(ValidationError, match="vector"):
        check_pure_state(np.eye(2))


def test_project_builds_rank_one_density():
    psi = np.array([1.0, 1.0j]) / np.sqrt(2)
    rho = project(psi)
    check_density_matrix(rho)
    assert purity(rho) == pytest.approx(1.0)
    np.testing.assert_allclose(rho @ rho, rho, atol=1e-14)


def test_purity_of_maximally_mixed():
    assert purity(np.eye(2) / 2) == pytest.approx(0.5)


def test_population():
    rho = np.diag([0.3, 0.7]).astype(complex)
    assert population(rho, np.array([1.0, 0.0])) == pytest.approx(0.3)
    assert population(rho, np.array([0.0, 1.0])) == pytest.approx(0.7)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    assert population(rho, plus) == pytest.approx(0.5)


def test_check_density_matrix_rejects_unphysical():
    check_density_matrix(np.eye(2) / 2)
    with pytest.raises(PhysicalityError, match="trace"):
        check_density_matrix(np.eye(2))
    with pytest.raises(PhysicalityError, match="asymmetry"):
        check_density_matrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(PhysicalityError, match="eigenvalue"):
        check_density_matrix(np.diag([1.1, -0.1]))


def test_fidelity_pure_pure_overlap():
    e = project(np.array([1.0, 0.0]))
    g = project(np.array([0.0, 1.0]))
    plus = project(np.array([1.0, 1.0]) / np.sqrt(2))
    assert fidelity(e, e) == pytest.approx(1.0)
    assert fidelity(e, g) == pytest.approx(0.0, abs=1e-12)
    assert fidelity(e, plus) == pytest.approx(np.sqrt(0.5))


def test_fidelity_pure_mixed():
    e = project(np.array([1.0, 0.0]))
    assert fidelity(e, np.eye(2) / 2) == pytest.approx(np.sqrt(0.5))


def test_fidelity_commuting_mixed_pair():
    # diagonal states reduce to the classical Bhattacharyya coefficient
    p = np.array([0.3, 0.7])
    q = np.array([0.6, 0.4])
    want = float(np.sum(np.sqrt(p * q)))
    got = fidelity(np.diag(p).astype(complex), np.diag(q).astype(complex))
    assert got == pytest.approx(want, abs=1e-12)


def test_fidelity_symmetric(rng):
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    rho1 = a @ a.conj().T
    rho1 /= np.trace(rho1).real
    rho2 = b @ b.conj().T
    rho2 /= np.trace(rho2).real
    assert fidelity(rho1, rho2) == pytest.approx(fidelity(rho2, rho1),
                                                 abs=1e-8)
