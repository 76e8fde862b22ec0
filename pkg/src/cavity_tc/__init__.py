"""Mean-field and truncated-Wigner simulator for a modulated atom-cavity time crystal."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    SystemParams, SystemState, PumpValue, Observables, NonFiniteStateError,
    atom_derivative, cavity_derivative, hamiltonian, observables, order_parameter, bunching,
)
from .drive import DriveProgram, Segment, NoiseChannel, NoiseState, evaluate_drive, standard_protocol  # noqa: E402
from .dynamics import IntegratorConfig, TrajectoryRecord, NumericalFault, integrate  # noqa: E402

__all__ = [
    "SystemParams", "SystemState", "PumpValue", "Observables", "NonFiniteStateError",
    "atom_derivative", "cavity_derivative", "hamiltonian", "observables", "order_parameter", "bunching",
    "DriveProgram", "Segment", "NoiseChannel", "NoiseState", "evaluate_drive", "standard_protocol",
    "IntegratorConfig", "TrajectoryRecord", "NumericalFault", "integrate",
]
