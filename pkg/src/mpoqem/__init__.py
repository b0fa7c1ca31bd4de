"""Error mitigation with matrix product operators.

Noisy circuits are compiled into MPO channels, inverted variationally, and the
inverse noise channel is truncated to a cheap correction applied after each
part of the circuit. A dense oracle, a grid (PEPO) variant and a seeded
benchmark runner come along.
"""

from __future__ import annotations

from .channels import GATES, NoiseKind, make_gate_superop, make_noise_superop
from .circuit import (
    CircuitSpec,
    GateOp,
    LayerSpec,
    NoiseProfile,
    compile_dense,
    compile_ideal_mpo,
    compile_noisy_mpo,
    generate_test_circuit,
    partition,
)
from .dense import DenseState, DenseSuperOp
from .inverse import InverseReport, mpo_inverse
from .mpo import (
    Mpo,
    VecStateMps,
    compose,
    identity_mpo,
    relative_distance_mpo,
    trace_infidelity_mpo,
    truncate,
)
from .pipeline import PipelineParams, QemRunRecord, StateSimConfig, noise_inverse, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "GATES",
    "CircuitSpec",
    "DenseState",
    "DenseSuperOp",
    "GateOp",
    "InverseReport",
    "LayerSpec",
    "Mpo",
    "NoiseKind",
    "NoiseProfile",
    "PipelineParams",
    "QemRunRecord",
    "StateSimConfig",
    "VecStateMps",
    "compile_dense",
    "compile_ideal_mpo",
    "compile_noisy_mpo",
    "compose",
    "generate_test_circuit",
    "identity_mpo",
    "make_gate_superop",
    "make_noise_superop",
    "mpo_inverse",
    "noise_inverse",
    "partition",
    "relative_distance_mpo",
    "run_pipeline",
    "trace_infidelity_mpo",
    "truncate",
]
