"""Lyapunov-control schedule design and robustness analysis for open quantum systems."""

from .control import (ControlSchedule, DesignReport, design_schedule,
                      drift_cancel_field, feedback_field, fingerprint_model,
                      invariant_set_residual, lyapunov_value,
                      stage_fields_for_replay)
from .dynamics import (ControlSystemModel, IntegratorConfig, LindbladChannel,
                       dissipator, master_rhs, propagate_target, rk4_step)
from .errors import (ConfigError, IntegrationError, PhysicalityError,
                     QlyapError, ValidationError)
from .linalg import (anticommutator, commutator, hermitian_eig, hermitianize,
                     psd_sqrt, trace_product)
from .models import (FourLevelParams, ModelBundle, TwoLevelParams,
                     four_level_bundle, four_level_dark_states,
                     two_level_bundle)
from .robustness import (EnsembleResult, NoiseSpec, SweepAxis, SweepGrid,
                         SweepResult, noise_ensemble, replay_open_loop,
                         sweep_uncertainty)
from .states import fidelity, population, project, purity

__version__ = "0.1.0"

__all__ = [
    "ControlSchedule", "ControlSystemModel", "DesignReport", "EnsembleResult",
    "FourLevelParams", "IntegratorConfig", "LindbladChannel", "ModelBundle",
    "NoiseSpec", "SweepAxis", "SweepGrid", "SweepResult", "TwoLevelParams",
    "ConfigError", "IntegrationError", "PhysicalityError", "QlyapError",
    "ValidationError", "anticommutator", "commutator", "design_schedule",
    "dissipator", "drift_cancel_field", "feedback_field", "fidelity",
    "fingerprint_model", "four_level_bundle", "four_level_dark_states",
    "hermitian_eig", "hermitianize", "invariant_set_residual",
    "lyapunov_value", "master_rhs", "noise_ensemble", "population",
    "project", "propagate_target", "psd_sqrt", "purity", "replay_open_loop",
    "rk4_step", "stage_fields_for_replay", "sweep_uncertainty",
    "trace_product", "two_level_bundle",
]
