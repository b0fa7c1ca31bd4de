from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpoqem import dense
from mpoqem.channels import (
    PAULIS,
    NoiseKind,
    global_depolarizing_mpo,
    make_noise_superop,
    max_rate,
    noisy_gate_superop,
    sample_rate,
)
from mpoqem.mpo import mpo_to_dense


@pytest.mark.parametrize("kind", list(NoiseKind))
def test_every_channel_trace_preserving(kind):
    rng = np.random.default_rng(7)
    sizes = [1, 2, 3] if kind is NoiseKind.GLOBAL_DEPOLARIZING else [1, 2]
    for n in sizes:
        for rate in rng.uniform(0, max_rate(kind, n), size=20):
            assert dense.trace_infidelity(make_noise_superop(kind, rate, n)) <= 1e-12


def test_amplitude_damping_two_qubit_factorizes_exactly():
    for rate in (0.0, 0.05, 0.37, 1.0):
        one = make_noise_superop("amplitude_damping", rate).matrix
        two = make_noise_superop("amplitude_damping", rate, 2).matrix
        assert np.array_equal(two, np.kron(one, one))


def _pauli_sum(terms):
    ops = []
    for p, alphas in terms:
        e = np.ones((1, 1), dtype=complex)
        for a in alphas:
            e = np.kron(e, PAULIS[a])
        ops.append(np.sqrt(p) * e)
    return dense.superop_from_kraus(ops).matrix


@given(st.floats(0.0, 1.0))
def test_two_qubit_pauli_channels_match_operator_sums(frac):
    p = frac * max_rate("depolarizing", 2)
    terms = [(1 - p, (0, 0))] + [(p / 15, ab) for ab in itertools.product(range(4), repeat=2) if ab != (0, 0)]
    assert np.allclose(make_noise_superop("depolarizing", p, 2).matrix, _pauli_sum(terms), atol=1e-13)
    p = frac * max_rate("dephasing", 2)
    terms = [(1 - p, (0, 0)), (p / 3, (0, 3)), (p / 3, (3, 0)), (p / 3, (3, 3))]
    assert np.allclose(make_noise_superop("dephasing", p, 2).matrix, _pauli_sum(terms), atol=1e-13)
    p = frac
    assert np.allclose(
        make_noise_superop("bit_flip", p, 2).matrix, _pauli_sum([(1 - p, (0, 0)), (p, (1, 1))]), atol=1e-13
    )


def test_correlated_bit_flip_is_not_a_product():
    two = make_noise_superop("bit_flip", 0.2, 2).matrix
    one = make_noise_superop("bit_flip", 0.2).matrix
    assert not np.allclose(two, np.kron(one, one))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_global_depolarizing_mpo_matches_closed_form(n):
    rates = [0.0, 0.01, 0.05, 0.3] + ([0.7] if n < 4 else [])
    for rate in rates:
        m = global_depolarizing_mpo(n, rate)
        assert m.max_bond <= 2
        # closed form: (1 - lam) rho + lam Tr(rho) 1 / 2^n with lam = 4^n rate / (4^n - 1)
        lam = 4**n * rate / (4**n - 1)
        t = dense.trace_functional(n)
        closed = (1 - lam) * np.eye(4**n) + lam / 2**n * np.outer(t, t)
        assert np.allclose(mpo_to_dense(m).matrix, closed, atol=1e-12)
        if n <= 3:
            assert np.allclose(make_noise_superop("global_depolarizing", rate, n).matrix, closed, atol=1e-12)


def test_rate_bounds_enforced():
    with pytest.raises(ValueError):
        make_noise_superop("depolarizing", 0.8)
    with pytest.raises(ValueError):
        make_noise_superop("bit_flip", -0.1)
    with pytest.raises(ValueError):
        make_noise_superop("dephasing", 0.1, 3)
    with pytest.raises(ValueError):
        NoiseKind("coherent")


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.2))
def test_sample_rate_window(seed, avg):
    rng = np.random.default_rng(seed)
    draws = [sample_rate(rng, avg) for _ in range(20)]
    assert all(0.8 * avg <= r <= 1.2 * avg for r in draws)


def test_sample_rate_seeded():
    a = [sample_rate(np.random.default_rng(3), 0.01) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_noisy_gate_applies_noise_after_gate():
    op = noisy_gate_superop("H", NoiseKind.AMPLITUDE_DAMPING, 0.1).matrix
    h = dense.unitary_superop(np.array([[1, 1], [1, -1]]) / np.sqrt(2)).matrix
    ad = make_noise_superop("amplitude_damping", 0.1).matrix
    assert np.allclose(op, ad @ h)
    assert np.allclose(noisy_gate_superop("H", None, 0.3).matrix, h)
