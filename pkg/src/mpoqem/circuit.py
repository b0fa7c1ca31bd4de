"""Layered test circuits: specification, random generation, partitioning, compilation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dense
from .channels import (
    LOCAL_FAMILIES,
    SINGLE_QUBIT_GATES,
    NoiseKind,
    global_depolarizing_mpo,
    make_noise_superop,
    noisy_gate_superop,
    sample_rate,
)
from .mpo import DEFAULT_CUTOFF, Mpo, TruncationReport, apply_mpo_layer, identity_mpo, split_two_site

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PLACEMENTS = ("staggered", "aligned")


@dataclass(frozen=True)
class GateOp:
    name: str
    qubits: tuple[int, ...]
    noise: NoiseKind | None = None
    rate: float = 0.0

    def superop(self, ideal: bool = False) -> dense.DenseSuperOp:
        if ideal:
            return noisy_gate_superop(self.name, None, 0.0)
        return noisy_gate_superop(self.name, self.noise, self.rate)


@dataclass(frozen=True)
class LayerSpec:
    """One circuit layer plus the noise attached to it.

    ``global_noise`` is the rate of an all-qubit depolarizing channel applied
    after the layer, or ``None``.
    """

    gates: tuple[GateOp, ...]
    global_noise: float | None = None

    @property
    def is_two_qubit(self) -> bool:
        return any(len(g.qubits) == 2 for g in self.gates)


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    layers: tuple[LayerSpec, ...]
    seed: int = 0
    partition: tuple[int, int] | None = None
    placement: str = "staggered"

    def __post_init__(self) -> None:
        if self.partition is not None:
            m, d0 = self.partition
            if m * d0 != len(self.layers):
                raise ValueError(f"partition {m}x{d0} does not cover {len(self.layers)} layers")
        for layer in self.layers:
            for g in layer.gates:
                if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                    raise ValueError(f"gate {g.name} on {g.qubits} outside {self.n_qubits} qubits")
                if len(g.qubits) == 2 and g.qubits[1] != g.qubits[0] + 1:
                    raise ValueError("two-qubit gates act on neighbouring qubits (q, q+1)")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def without_noise(self) -> CircuitSpec:
        return dataclasses.replace(self, layers=tuple(_strip(layer, True, True) for layer in self.layers))

    def without_local_noise(self) -> CircuitSpec:
        """Keep only the global channels; what each-gate mitigation would leave behind."""
        return dataclasses.replace(self, layers=tuple(_strip(layer, True, False) for layer in self.layers))

    def without_global_noise(self) -> CircuitSpec:
        return dataclasses.replace(self, layers=tuple(_strip(layer, False, True) for layer in self.layers))

    def to_dict(self) -> dict:
        out: dict = {"n_qubits": self.n_qubits, "seed": self.seed, "placement": self.placement}
        if self.partition is not None:
            out["partition"] = list(self.partition)
        layers = []
        for layer in self.layers:
            entry: dict = {"gates": []}
            if layer.global_noise is not None:
                entry["global_noise"] = layer.global_noise
            for g in layer.gates:
                gd: dict = {"name": g.name, "qubits": list(g.qubits)}
                if g.noise is not None:
                    gd["noise"] = g.noise.value
                    gd["rate"] = g.rate
                entry["gates"].append(gd)
            layers.append(entry)
        out["layers"] = layers
        return out

    @classmethod
    def from_dict(cls, data: dict) -> CircuitSpec:
        layers = []
        for entry in data["layers"]:
            gates = tuple(
                GateOp(
                    g["name"],
                    tuple(g["qubits"]),
                    NoiseKind(g["noise"]) if "noise" in g else None,
                    float(g.get("rate", 0.0)),
                )
                for g in entry["gates"]
            )
            layers.append(LayerSpec(gates, entry.get("global_noise")))
        part = data.get("partition")
        return cls(
            n_qubits=int(data["n_qubits"]),
            layers=tuple(layers),
            seed=int(data.get("seed", 0)),
            partition=tuple(part) if part is not None else None,
            placement=data.get("placement", "staggered"),
        )

    def to_toml(self) -> str:
        import tomli_w

        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> CircuitSpec:
        return cls.from_dict(tomllib.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_toml())

    @classmethod
    def load(cls, path) -> CircuitSpec:
        return cls.from_toml(Path(path).read_text())


def _strip(layer: LayerSpec, local: bool, glob: bool) -> LayerSpec:
    gates = tuple(GateOp(g.name, g.qubits) for g in layer.gates) if local else layer.gates
    return LayerSpec(gates, None if glob else layer.global_noise)


@dataclass(frozen=True)
class NoiseProfile:
    """How noise is attached when generating a test circuit.

    Attributes:
        family: A local noise family, ``"mixed"`` (random family per gate), or ``"none"``.
        eps2: Average two-qubit error rate.
        eps1: Average single-qubit rate; defaults to ``eps2 / 10``.
        global_rate: Rate of the all-qubit depolarizing channel (0 disables it).
        global_period: Insert the global channel after every ``global_period`` layers.
        spread: Per-gate rates are uniform in ``[(1-spread) eps, (1+spread) eps]``.
    """

    family: str = "depolarizing"
    eps2: float = 0.01
    eps1: float | None = None
    global_rate: float = 0.0
    global_period: int = 1
    spread: float = 0.2

    @property
    def single_rate(self) -> float:
        return self.eps2 / 10 if self.eps1 is None else self.eps1

    def families(self) -> tuple[NoiseKind, ...]:
        if self.family == "mixed":
            return LOCAL_FAMILIES
        return (NoiseKind(self.family),)


def cnot_pairs(n: int, offset: int) -> list[tuple[int, int]]:
    return [(q, q + 1) for q in range(offset, n - 1, 2)]


def generate_test_circuit(
    n_qubits: int,
    depth: int,
    seed: int,
    noise_profile: NoiseProfile | None = None,
    placement: str = "staggered",
    d0: int | None = None,
) -> CircuitSpec:
    """Random brickwork circuit: CNOT layers alternate with random {Z, H, S, T} layers.

    Gate choices, noise families and rates come from independent child streams of
    ``seed``, so the same seed yields the same gates whatever the noise profile.
    """
    if n_qubits < 2:
        raise ValueError("test circuits need at least two qubits")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if placement not in PLACEMENTS:
        raise ValueError(f"placement must be one of {PLACEMENTS}")
    gate_rng, family_rng, rate_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    profile = noise_profile or NoiseProfile(family="none", eps2=0.0)
    noisy = profile.family != "none"
    fams = profile.families() if noisy else ()

    def attach(name: str, qubits: tuple[int, ...]) -> GateOp:
        if not noisy:
            return GateOp(name, qubits)
        kind = fams[int(family_rng.integers(len(fams)))]
        avg = profile.eps2 if len(qubits) == 2 else profile.single_rate
        return GateOp(name, qubits, kind, sample_rate(rate_rng, avg, profile.spread))

    layers = []
    n_cnot_layers = 0
    for k in range(depth):
        if k % 2 == 0:
            offset = n_cnot_layers % 2 if placement == "staggered" else 0
            n_cnot_layers += 1
            gates = tuple(attach("CNOT", pair) for pair in cnot_pairs(n_qubits, offset))
        else:
            names = gate_rng.integers(len(SINGLE_QUBIT_GATES), size=n_qubits)
            gates = tuple(attach(SINGLE_QUBIT_GATES[int(i)], (q,)) for q, i in enumerate(names))
        glob = None
        if profile.global_rate > 0 and (k + 1) % profile.global_period == 0:
            glob = profile.global_rate
        layers.append(LayerSpec(gates, glob))
    partition = (depth // d0, d0) if d0 else None
    return CircuitSpec(n_qubits, tuple(layers), seed=seed, partition=partition, placement=placement)


def partition(spec: CircuitSpec) -> list[CircuitSpec]:
    """Split into ``m`` consecutive parts of ``d0`` layers each."""
    if spec.partition is None:
        return [spec]
    m, d0 = spec.partition
    return [
        dataclasses.replace(spec, layers=spec.layers[k * d0:(k + 1) * d0], partition=(1, d0))
        for k in range(m)
    ]


def layer_mpo(layer: LayerSpec, n: int, ideal: bool = False) -> Mpo:
    """Product MPO of one gate layer (without its global channel)."""
    sites: list[np.ndarray | None] = [None] * n
    for g in layer.gates:
        op = g.superop(ideal).matrix
        if len(g.qubits) == 1:
            sites[g.qubits[0]] = op[None, None]
        else:
            left, right = split_two_site(op)
            sites[g.qubits[0]], sites[g.qubits[1]] = left, right
    eye = np.eye(4, dtype=complex)[None, None]
    return Mpo([eye if s is None else s for s in sites])


def _compile(spec: CircuitSpec, ideal: bool, max_bond: int | None, cutoff: float):
    report = TruncationReport()
    n = spec.n_qubits
    out = identity_mpo(n)
    for layer in spec.layers:
        out = apply_mpo_layer(out, layer_mpo(layer, n, ideal), max_bond, cutoff, report)
        if not ideal and layer.global_noise is not None:
            out = apply_mpo_layer(out, global_depolarizing_mpo(n, layer.global_noise), max_bond, cutoff, report)
    return out, report


def compile_ideal_mpo(spec: CircuitSpec, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF) -> Mpo:
    return _compile(spec, True, max_bond, cutoff)[0]


def compile_noisy_mpo(
    spec: CircuitSpec, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF
) -> tuple[Mpo, TruncationReport]:
    """Contract the noisy circuit layer by layer, truncating to ``max_bond`` after each layer."""
    return _compile(spec, False, max_bond, cutoff)


def compile_dense(spec: CircuitSpec, ideal: bool = False) -> dense.DenseSuperOp:
    """Brute-force superoperator of the circuit; oracle for small qubit counts."""
    n = spec.n_qubits
    mat = np.eye(4**n, dtype=complex)
    for layer in spec.layers:
        mat = apply_layer_dense(layer, mat, n, ideal)
    return dense.DenseSuperOp(n, mat)


def apply_layer_dense(layer: LayerSpec, target: np.ndarray, n: int, ideal: bool = False) -> np.ndarray:
    """Apply a layer (and its global channel) to a dense state vector or superoperator."""
    for g in layer.gates:
        target = dense.apply_local(g.superop(ideal).matrix, target, g.qubits, n)
    if not ideal and layer.global_noise is not None:
        if n <= dense.SUPEROP_QUBIT_CAP:
            target = make_noise_superop(NoiseKind.GLOBAL_DEPOLARIZING, layer.global_noise, n).matrix @ target
        else:
            target = _global_dense(target, n, layer.global_noise)
    return target


def _global_dense(target: np.ndarray, n: int, rate: float) -> np.ndarray:
    # rho -> c0 rho + c1 * 2^n Tr(rho) * 1, without forming the 4^n x 4^n matrix
    c0 = 1 - 4**n / (4**n - 1) * rate
    c1 = rate / (4**n - 1)
    t = dense.trace_functional(n)
    tr = t @ target
    return c0 * target + c1 * 2**n * np.multiply.outer(t, tr)


def simulate_dense_state(layers: Sequence[LayerSpec], n: int, ideal: bool = False) -> dense.DenseState:
    vec = dense.zero_state(n).vec
    for layer in layers:
        vec = apply_layer_dense(layer, vec, n, ideal)
    return dense.DenseState(n, vec)


__all__ = [
    "CircuitSpec",
    "GateOp",
    "LayerSpec",
    "NoiseProfile",
    "compile_dense",
    "compile_ideal_mpo",
    "compile_noisy_mpo",
    "generate_test_circuit",
    "layer_mpo",
    "partition",
]
