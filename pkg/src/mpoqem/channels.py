"""Gate and noise superoperators for the layered test circuits."""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .dense import DenseSuperOp, unitary_superop
from .mpo import Mpo

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

GATES: dict[str, np.ndarray] = {
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    # control on the first (lower-indexed) qubit
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}
SINGLE_QUBIT_GATES = ("Z", "H", "S", "T")


class NoiseKind(str, enum.Enum):
    DEPOLARIZING = "depolarizing"
    DEPHASING = "dephasing"
    BIT_FLIP = "bit_flip"
    AMPLITUDE_DAMPING = "amplitude_damping"
    GLOBAL_DEPOLARIZING = "global_depolarizing"


LOCAL_FAMILIES = (
    NoiseKind.DEPOLARIZING,
    NoiseKind.DEPHASING,
    NoiseKind.BIT_FLIP,
    NoiseKind.AMPLITUDE_DAMPING,
)


def max_rate(kind: NoiseKind, n_qubits: int) -> float:
    """Largest rate for which the channel's defining coefficients stay physical."""
    kind = NoiseKind(kind)
    if kind is NoiseKind.DEPOLARIZING:
        return 3 / 4 if n_qubits == 1 else 15 / 16
    if kind is NoiseKind.DEPHASING:
        return 1 / 2 if n_qubits == 1 else 3 / 4
    if kind is NoiseKind.GLOBAL_DEPOLARIZING:
        return (4**n_qubits - 1) / 4**n_qubits
    return 1.0


def _check_rate(kind: NoiseKind, rate: float, n_qubits: int) -> None:
    hi = max_rate(kind, n_qubits)
    if not 0.0 <= rate <= hi:
        raise ValueError(f"{kind.value} rate on {n_qubits} qubit(s) must lie in [0, {hi}], got {rate}")


def pauli_superop(alpha: int) -> np.ndarray:
    p = PAULIS[alpha]
    return np.kron(p, p.conj())


# sum_alpha sigma_alpha (x) sigma_alpha^* = 2 |1>><<1|
PAULI_TWIRL = sum(pauli_superop(a) for a in range(4))


def make_gate_superop(kind: str) -> DenseSuperOp:
    """Superoperator ``U (x) U^*`` of a named gate."""
    try:
        u = GATES[kind]
    except KeyError:
        raise ValueError(f"unknown gate {kind!r}; expected one of {sorted(GATES)}") from None
    return unitary_superop(u)


def _local_pauli_channel(terms: Sequence[tuple[float, Sequence[int]]], n: int) -> DenseSuperOp:
    mat = np.zeros((4**n, 4**n), dtype=complex)
    for coeff, alphas in terms:
        op = np.ones((1, 1), dtype=complex)
        for a in alphas:
            op = np.kron(op, pauli_superop(a))
        mat += coeff * op
    return DenseSuperOp(n, mat)


def _amplitude_damping_1q(rate: float) -> np.ndarray:
    e0 = np.array([[1, 0], [0, np.sqrt(1 - rate)]], dtype=complex)
    e1 = np.array([[0, np.sqrt(rate)], [0, 0]], dtype=complex)
    return np.kron(e0, e0.conj()) + np.kron(e1, e1.conj())


def make_noise_superop(kind: NoiseKind | str, rate: float, n_qubits: int = 1) -> DenseSuperOp:
    """Dense superoperator of one of the noise channels.

    Args:
        kind: Noise family.
        rate: Error rate of the channel.
        n_qubits: 1 or 2 for the local families; any size for global depolarizing.

    Raises:
        ValueError: On an unsupported size or an out-of-range rate.
    """
    kind = NoiseKind(kind)
    if kind is not NoiseKind.GLOBAL_DEPOLARIZING and n_qubits not in (1, 2):
        raise ValueError(f"{kind.value} noise is defined on 1 or 2 qubits")
    _check_rate(kind, rate, n_qubits)
    n = n_qubits
    if kind is NoiseKind.DEPOLARIZING:
        if n == 1:
            terms = [(1 - 4 * rate / 3, [0])] + [(rate / 3, [a]) for a in range(4)]
        else:
            terms = [(1 - 16 * rate / 15, [0, 0])]
            terms += [(rate / 15, [a, b]) for a in range(4) for b in range(4)]
        return _local_pauli_channel(terms, n)
    if kind is NoiseKind.DEPHASING:
        if n == 1:
            terms = [(1 - 2 * rate, [0])] + [(rate, [a]) for a in (0, 3)]
        else:
            terms = [(1 - 4 * rate / 3, [0, 0])]
            terms += [(rate / 3, [a, b]) for a in (0, 3) for b in (0, 3)]
        return _local_pauli_channel(terms, n)
    if kind is NoiseKind.BIT_FLIP:
        return _local_pauli_channel([(1 - rate, [0] * n), (rate, [1] * n)], n)
    if kind is NoiseKind.AMPLITUDE_DAMPING:
        s = _amplitude_damping_1q(rate)
        return DenseSuperOp(n, s if n == 1 else np.kron(s, s))
    # global depolarizing on n qubits
    c0, c1 = _global_coefficients(n, rate)
    ident = np.eye(1, dtype=complex)
    twirl = np.eye(1, dtype=complex)
    for _ in range(n):
        ident = np.kron(ident, np.eye(4))
        twirl = np.kron(twirl, PAULI_TWIRL)
    return DenseSuperOp(n, c0 * ident + c1 * twirl)


def noise_kraus(kind: NoiseKind | str, rate: float) -> list[np.ndarray]:
    """Single-qubit operation elements; used for operator-sum cross checks."""
    kind = NoiseKind(kind)
    _check_rate(kind, rate, 1)
    if kind is NoiseKind.DEPOLARIZING:
        return [np.sqrt(1 - rate) * PAULIS[0]] + [np.sqrt(rate / 3) * PAULIS[a] for a in (1, 2, 3)]
    if kind is NoiseKind.DEPHASING:
        return [np.sqrt(1 - rate) * PAULIS[0], np.sqrt(rate) * PAULIS[3]]
    if kind is NoiseKind.BIT_FLIP:
        return [np.sqrt(1 - rate) * PAULIS[0], np.sqrt(rate) * PAULIS[1]]
    if kind is NoiseKind.AMPLITUDE_DAMPING:
        return [
            np.array([[1, 0], [0, np.sqrt(1 - rate)]], dtype=complex),
            np.array([[0, np.sqrt(rate)], [0, 0]], dtype=complex),
        ]
    raise ValueError(f"no single-qubit Kraus form for {kind.value}")


def _global_coefficients(n: int, rate: float) -> tuple[float, float]:
    return 1 - 4**n / (4**n - 1) * rate, rate / (4**n - 1)


def global_depolarizing_mpo(n: int, rate: float) -> Mpo:
    """Bond-2 MPO of the global depolarizing channel on ``n`` qubits.

    The two branches carry the identity and the per-site Pauli twirl; the
    left boundary holds their coefficients.
    """
    if n < 1:
        raise ValueError("need at least one site")
    _check_rate(NoiseKind.GLOBAL_DEPOLARIZING, rate, n)
    c0, c1 = _global_coefficients(n, rate)
    branches = np.stack([np.eye(4, dtype=complex), PAULI_TWIRL])  # (2, 4, 4)
    if n == 1:
        return Mpo([(c0 * branches[0] + c1 * branches[1])[None, None]])
    bulk = np.zeros((2, 2, 4, 4), dtype=complex)
    bulk[0, 0], bulk[1, 1] = branches
    first = (np.array([c0, c1])[:, None, None] * branches)[None]
    last = branches[:, None]
    return Mpo([first] + [bulk.copy() for _ in range(n - 2)] + [last])


def sample_rate(rng: np.random.Generator, average: float, spread: float = 0.2) -> float:
    """Draw a per-gate rate uniformly from ``[(1-spread)*avg, (1+spread)*avg]``."""
    return float(rng.uniform((1 - spread) * average, (1 + spread) * average))


def noisy_gate_superop(gate: str, noise: NoiseKind | None, rate: float) -> DenseSuperOp:
    """Gate followed by its attached noise channel of matching arity."""
    op = make_gate_superop(gate)
    if noise is None or rate == 0.0:
        return op
    return make_noise_superop(noise, rate, op.n_qubits) @ op


__all__ = [
    "GATES",
    "LOCAL_FAMILIES",
    "NoiseKind",
    "PAULIS",
    "PAULI_TWIRL",
    "SINGLE_QUBIT_GATES",
    "global_depolarizing_mpo",
    "make_gate_superop",
    "make_noise_superop",
    "max_rate",
    "noise_kraus",
    "noisy_gate_superop",
    "sample_rate",
]
