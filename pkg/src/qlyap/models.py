"""Concrete control problems: a driven qubit and a four-level decaying system.

The four-level system has a two-dimensional decoherence-free subspace spanned
by the dark states D1 (a superposition of the two lower levels outside the
decay path) and D2 (the bare fourth level). The target is |D1><D1|; the first
control couples everything to everything (all-ones matrix) and is reserved
for drift cancellation, the other two couple the lossy level to D1 and D2.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlSystemModel, LindbladChannel
from .errors import ValidationError
from .states import project

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class ModelBundle:
    """A ready-to-run problem: plant, initial state, pure target, and named
    Hermitian directions along which the free Hamiltonian may be uncertain."""

    model: ControlSystemModel
    rho0: np.ndarray
    rho_d: np.ndarray
    perturbation_ops: dict[str, np.ndarray] = field(default_factory=dict)

    def perturbed_h0(self, offsets: dict[str, float]) -> np.ndarray:
        h = self.model.h0
        for name, value in offsets.items():
            if name not in self.perturbation_ops:
                raise ValidationError(f"unknown perturbation direction "
                                      f"{name!r}; have "
                                      f"{sorted(self.perturbation_ops)}")
            if value != 0.0:
                h = h + value * self.perturbation_ops[name]
        return h

    def perturbed_model(self, offsets: dict[str, float]) -> ControlSystemModel:
        return dataclasses.replace(self.model, h0=self.perturbed_h0(offsets))


@dataclass(frozen=True)
class TwoLevelParams:
    """Qubit with free Hamiltonian (omega/2) sigma_z and one sigma_x control."""

    omega: float = 4.0
    beta0: float = math.pi / 4
    phi0: float = math.pi / 4

    def __post_init__(self):
        if not np.isfinite(self.omega):
            raise ValidationError("omega must be finite")


def two_level_bundle(params: TwoLevelParams = TwoLevelParams()) -> ModelBundle:
    """Closed qubit steered from cos(b0)|e> + e^{i phi0} sin(b0)|g> to |g>."""
    p = params
    h0 = 0.5 * p.omega * SIGMA_Z
    psi0 = np.array([math.cos(p.beta0),
                     np.exp(1j * p.phi0) * math.sin(p.beta0)])
    model = ControlSystemModel(h0=h0, controls=(SIGMA_X,))
    return ModelBundle(
        model=model, rho0=project(psi0),
        rho_d=np.diag([0.0, 1.0]).astype(complex),
        perturbation_ops={"dx": SIGMA_X, "dz": SIGMA_Z})


@dataclass(frozen=True)
class FourLevelParams:
    """Lossy level |0> coupled to |1>, |2> with Rabi splitting omega_rabi and
    mixing angle phi; |3> is uncoupled; |0> decays into each lower level."""

    omega_rabi: float = 5.0
    phi: float = math.pi / 5
    deltas: tuple[float, float, float] = (4.0, 2.0, 2.0)
    gammas: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    betas: tuple[float, float, float] = (math.pi / 5, math.pi / 4, math.pi / 3)

    def __post_init__(self):
        if len(self.deltas) != 3 or len(self.gammas) != 3 or len(self.betas) != 3:
            raise ValidationError("deltas, gammas, betas each need 3 entries")
        for g in self.gammas:
            if not (g >= 0):
                raise ValidationError(f"gammas >= 0 required, got {g}")

    @property
    def gamma_total(self) -> float:
        return float(sum(self.gammas))


def four_level_dark_states(
        params: FourLevelParams = FourLevelParams()) -> tuple[np.ndarray, np.ndarray]:
    """The two states annihilated by the couplings out of the lossy level."""
    p = params
    d1 = np.array([0.0, -math.sin(p.phi), math.cos(p.phi), 0.0], dtype=complex)
    d2 = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)
    return d1, d2


def four_level_bundle(params: FourLevelParams = FourLevelParams(),
                      orientation: str = "decay") -> ModelBundle:
    """Open four-level system targeting |D1><D1| inside the protected subspace.

    orientation picks the jump-operator direction: "decay" moves population
    from the lossy |0> into each lower level (|j><0|), "absorption" is the
    reverse reading (|0><j|). Decay is the default; it is the orientation
    under which the target subspace is exactly dissipation-free.
    """
    p = params
    if orientation not in ("decay", "absorption"):
        raise ValidationError(f"unknown lindblad orientation {orientation!r}")
    o1 = p.omega_rabi * math.cos(p.phi)
    o2 = p.omega_rabi * math.sin(p.phi)
    h0 = np.zeros((4, 4), dtype=complex)
    h0[0, 0], h0[1, 1], h0[2, 2] = p.deltas
    h0[0, 1] = h0[1, 0] = o1
    h0[0, 2] = h0[2, 0] = o2

    d1, d2 = four_level_dark_states(p)
    e0 = np.zeros(4, dtype=complex)
    e0[0] = 1.0
    h1 = np.ones((4, 4), dtype=complex)
    h2 = np.outer(d1, d2.conj()) + np.outer(d2, d1.conj())
    h3 = np.outer(e0, d2.conj()) + np.outer(d2, e0)

    jumps = []
    for j in range(1, 4):
        ej = np.zeros(4, dtype=complex)
        ej[j] = 1.0
        op = np.outer(ej, e0) if orientation == "decay" else np.outer(e0, ej)
        jumps.append(op)
    channel = LindbladChannel(jump_operators=tuple(jumps), rates=p.gammas)

    b1, b2, b3 = p.betas
    psi0 = np.array([math.sin(b1) * math.cos(b3),
                     math.cos(b1) * math.cos(b2),
                     math.cos(b1) * math.sin(b2),
                     math.sin(b1) * math.sin(b3)], dtype=complex)

    px = np.zeros((4, 4), dtype=complex)
    px[0, 1] = px[1, 0] = 1.0
    pz = np.zeros((4, 4), dtype=complex)
    pz[0, 2] = pz[2, 0] = 1.0

    model = ControlSystemModel(h0=h0, controls=(h1, h2, h3), channel=channel,
                               drift_cancel_index=0)
    return ModelBundle(model=model, rho0=project(psi0), rho_d=project(d1),
                       perturbation_ops={"dx": px, "dz": pz})
