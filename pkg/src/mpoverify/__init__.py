"""MPO-based verifier circuits and verifier-driven coherent-error calibration."""

__version__ = "0.1.0"

from .circuit_ir import (  # noqa: E402
    Circuit,
    Gate,
    bind_parameters,
    build_mcu,
    build_mcx,
    build_qft,
    circuit_to_dense,
    decompose_to_rotations,
)
from .layout_depth import DepthModel, depth_circuit_2d, depth_verifier_2d, find_crossover  # noqa: E402
from .mpo_engine import MPO, bond_profile, mpo_to_dense, operator_fidelity, zip_up  # noqa: E402
from .noisy_sim import (  # noqa: E402
    Channel,
    NoiseModel,
    apply_noisy_coherent,
    circuit_channel,
    fidelity_eq1,
    optimal_unitary_correction,
)
from .qem_optimizer import (  # noqa: E402
    CalibrationReport,
    MitigationLayer,
    OptimizerConfig,
    calibrate_method1,
    calibrate_method2,
    objective,
    sample_trial_state,
)
from .verifier_synth import (  # noqa: E402
    VerificationResult,
    VerifierCircuit,
    build_verifier,
    verifier_depth_profile,
    verify_pair,
)

__all__ = [
    "CalibrationReport", "Channel", "Circuit", "DepthModel", "Gate", "MPO", "MitigationLayer",
    "NoiseModel", "OptimizerConfig", "VerificationResult", "VerifierCircuit", "apply_noisy_coherent",
    "bind_parameters", "bond_profile", "build_mcu", "build_mcx", "build_qft", "build_verifier",
    "calibrate_method1", "calibrate_method2", "circuit_channel", "circuit_to_dense",
    "decompose_to_rotations", "depth_circuit_2d", "depth_verifier_2d", "fidelity_eq1",
    "find_crossover", "mpo_to_dense", "objective", "operator_fidelity", "optimal_unitary_correction",
    "sample_trial_state", "verifier_depth_profile", "verify_pair", "zip_up",
]
