from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_kraus, random_unitary
from mpoqem import dense
from mpoqem.channels import GATES, LOCAL_FAMILIES, make_gate_superop, make_noise_superop, max_rate, noise_kraus


def test_z_superop_matches_closed_form():
    z = make_gate_superop("Z").matrix
    assert np.array_equal(z, np.diag([1, -1, -1, 1]).astype(complex))


def test_vectorization_roundtrip(rng):
    for n in (1, 2, 3):
        rho = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
        vec = dense.density_to_vec(rho)
        assert np.allclose(dense.vec_to_density(vec, n), rho)


def test_vectorization_index_convention():
    # |0><1| on qubit 0 and |1><0| on qubit 1 -> site indices 1 and 2
    rho = np.kron(np.array([[0, 1], [0, 0]]), np.array([[0, 0], [1, 0]]))
    vec = dense.density_to_vec(rho)
    assert np.flatnonzero(vec).tolist() == [1 * 4 + 2]


def test_trace_functional_reads_trace(rng):
    rho = rng.normal(size=(8, 8))
    assert np.isclose(dense.trace_functional(3) @ dense.density_to_vec(rho), np.trace(rho))


def test_superop_matches_operator_sum(rng):
    kraus = random_kraus(rng, 4, 3)
    op = dense.superop_from_kraus(kraus)
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    expected = sum(e @ rho @ e.conj().T for e in kraus)
    out = dense.vec_to_density(op.matrix @ dense.density_to_vec(rho), 2)
    assert np.allclose(out, expected, atol=1e-12)


@given(st.sampled_from(LOCAL_FAMILIES), st.floats(0.0, 1.0))
def test_kraus_channels_trace_preserving(kind, frac):
    rate = frac * max_rate(kind, 1)
    op = dense.superop_from_kraus(noise_kraus(kind, rate))
    assert dense.trace_infidelity(op) <= 1e-12
    assert np.allclose(op.matrix, make_noise_superop(kind, rate).matrix, atol=1e-12)


@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.floats(1e-4, 1.0))
def test_trace_infidelity_bounded_for_any_perturbation(n, seed, scale):
    # <<1| is the unnormalized vectorized identity, so the sharp bound carries |<<1|>>|^2 = 2**n
    rng = np.random.default_rng(seed)
    v = dense.superop_from_kraus(random_kraus(rng, 2**n, 3)).matrix
    t = dense.trace_functional(n)
    a = rng.normal(size=(4**n, 4**n)) + 1j * rng.normal(size=(4**n, 4**n))
    aligned = np.outer(rng.normal(size=4**n), t)
    for delta in (a, aligned.T):
        u = v + scale * delta / np.linalg.norm(delta)
        diff = np.linalg.norm(u - v) ** 2
        assert dense.trace_infidelity(dense.DenseSuperOp(n, u)) <= 2**n * diff * (1 + 1e-9) + 1e-15


def test_trace_infidelity_factor_is_attained():
    n = 2
    t = dense.trace_functional(n)
    u = np.eye(4**n) + 1e-3 * np.outer(t, t) / np.vdot(t, t).real
    diff = np.linalg.norm(u - np.eye(4**n)) ** 2
    assert dense.trace_infidelity(dense.DenseSuperOp(n, u.astype(complex))) == pytest.approx(2**n * diff, rel=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_unitary_superop_is_unitary(seed, n):
    u = random_unitary(np.random.default_rng(seed), 2**n)
    m = dense.unitary_superop(u).matrix
    assert np.allclose(m.conj().T @ m, np.eye(4**n), atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 4))
def test_constructed_channels_completely_positive(seed, n, count):
    op = dense.superop_from_kraus(random_kraus(np.random.default_rng(seed), 2**n, count))
    assert np.linalg.eigvalsh(dense.choi_matrix(op)).min() >= -1e-10
    assert dense.is_cptp(op)


@pytest.mark.parametrize("kind", LOCAL_FAMILIES)
@pytest.mark.parametrize("n", [1, 2])
def test_noise_channels_completely_positive(kind, n):
    for frac in (0.0, 0.3, 1.0):
        op = make_noise_superop(kind, frac * max_rate(kind, n), n)
        assert np.linalg.eigvalsh(dense.choi_matrix(op)).min() >= -1e-10


def test_gate_choi_is_rank_one():
    for name in GATES:
        ev = np.linalg.eigvalsh(dense.choi_matrix(make_gate_superop(name)))
        assert np.sum(ev > 1e-10) == 1


@given(st.integers(0, 2**32 - 1))
def test_compose_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (dense.DenseSuperOp(2, rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))) for _ in range(3))
    left = dense.compose(dense.compose(a, b), c).matrix
    right = dense.compose(a, dense.compose(b, c)).matrix
    assert np.linalg.norm(left - right) <= 1e-12 * np.linalg.norm(left)


@given(st.integers(0, 2**32 - 1))
def test_relative_distance_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 16, 16))
    assert dense.relative_distance(a, b) == pytest.approx(dense.relative_distance(b, a), rel=1e-14)
    assert dense.relative_distance(a, a) == 0.0
    assert dense.relative_distance(a, b) > 0.0


def test_apply_local_matches_kron(rng):
    op = make_noise_superop("depolarizing", 0.1, 2).matrix @ make_gate_superop("CNOT").matrix
    full = np.kron(np.kron(np.eye(4), op), np.eye(4))
    assert np.allclose(dense.embed(dense.DenseSuperOp(2, op), [1, 2], 4).matrix, full)
    vec = rng.normal(size=4**4)
    assert np.allclose(dense.apply_local(op, vec, [1, 2], 4), full @ vec)


def test_apply_local_non_adjacent_reversed():
    # control on qubit 2, target on qubit 0: |a b c> -> |a^c b c>
    u = np.zeros((8, 8))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                u[4 * (a ^ c) + 2 * b + c, 4 * a + 2 * b + c] = 1
    out = dense.embed(make_gate_superop("CNOT"), [2, 0], 3)
    assert np.allclose(out.matrix, dense.unitary_superop(u).matrix)


def test_dense_inverse_residual(rng):
    op = make_noise_superop("amplitude_damping", 0.2, 2)
    inv = dense.dense_inverse(op)
    assert np.allclose(inv.matrix @ op.matrix, np.eye(16), atol=1e-10)
    with pytest.raises(np.linalg.LinAlgError):
        dense.dense_inverse(make_noise_superop("amplitude_damping", 1.0, 1))


def test_caps_and_errors():
    with pytest.raises(dense.DimensionError):
        dense.identity(dense.SUPEROP_QUBIT_CAP + 1)
    with pytest.raises(dense.DimensionError):
        dense.compose(dense.identity(1), dense.identity(2))
    with pytest.raises(dense.NotCPTPError):
        dense.superop_from_kraus([np.eye(2) * 1.1])
    with pytest.raises(dense.DimensionError):
        dense.superop_from_kraus([np.eye(3)])
    with pytest.raises(ZeroDivisionError):
        dense.relative_distance(np.zeros(4), np.ones(4))
