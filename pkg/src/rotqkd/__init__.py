"""Rotation-invariant BB84 over hybrid spin-orbit photon states."""
from .optics import NoiseParams, QPlateParams, WaveplateParams
from .protocol import (
    Basis,
    Encoding,
    ProtocolConfig,
    QberReport,
    RoundRecord,
    SiftedKey,
    alice_prepare,
    bob_measure,
    channel_transmit,
    estimate_qber,
    exact_error_probability,
    qber_from_fidelities,
    run_session,
    secret_key_fraction,
    sift,
    simulate_rounds,
    theoretical_qber,
)
from .source import SourceParams
from .spinorbit import DensityMatrix, LinearOperator, Sam, SpinOrbitMode, SpinOrbitState

__version__ = "0.1.0"

__all__ = [
    "NoiseParams",
    "QPlateParams",
    "WaveplateParams",
    "Basis",
    "Encoding",
    "ProtocolConfig",
    "QberReport",
    "RoundRecord",
    "SiftedKey",
    "alice_prepare",
    "bob_measure",
    "channel_transmit",
    "estimate_qber",
    "exact_error_probability",
    "qber_from_fidelities",
    "run_session",
    "secret_key_fraction",
    "sift",
    "simulate_rounds",
    "theoretical_qber",
    "SourceParams",
    "DensityMatrix",
    "LinearOperator",
    "Sam",
    "SpinOrbitMode",
    "SpinOrbitState",
]
