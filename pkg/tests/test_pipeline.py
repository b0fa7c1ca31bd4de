from __future__ import annotations

import numpy as np
import pytest

from mpoqem import dense
from mpoqem.circuit import NoiseProfile, compile_dense, generate_test_circuit, simulate_dense_state
from mpoqem.mpo import VecStateMps, compose, mpo_to_dense
from mpoqem.pipeline import (
    PipelineParams,
    QemRunRecord,
    StateSimConfig,
    TraceDriftError,
    channel_distances,
    correction_layer,
    each_gate_floor,
    invert_part,
    noise_inverse,
    run_pipeline,
    simulate_state,
)


def _spec(n=6, depth=8, seed=0, eps2=0.01, glob=0.0, d0=4, family="depolarizing"):
    prof = NoiseProfile(family, eps2, global_rate=glob, global_period=d0 or 1)
    return generate_test_circuit(n, depth, seed, prof, d0=d0)


def test_zero_noise_is_identity_end_to_end():
    spec = generate_test_circuit(6, 8, 4, d0=4)
    rec = run_pipeline(spec, PipelineParams(correction_eps1=0.0))
    assert rec.unmitigated <= 1e-12
    assert rec.mitigated <= 1e-8


def test_state_simulation_matches_dense():
    spec = _spec(glob=0.02)
    rho = simulate_state(spec.layers, 6)
    ref = simulate_dense_state(spec.layers, 6)
    assert dense.relative_distance(rho.to_dense(), ref) <= 1e-12


def test_noise_inverse_exact_at_full_bond():
    spec = _spec(n=4, depth=4, d0=None, eps2=0.05)
    ni, u, u0 = invert_part(spec, PipelineParams(bond_dim=None, d_prime=16))
    fixed = mpo_to_dense(compose(ni.mpo, u)).matrix
    assert dense.relative_distance(fixed, compile_dense(spec, ideal=True).matrix) <= 1e-10


def test_dprime_monotone_on_fixed_instances():
    for seed in range(3):
        spec = _spec(depth=4, d0=None, seed=seed, eps2=0.1)
        out = channel_distances(spec, 5, [1, 2, 3, 4], seed=seed)
        vals = [out["mitigated"][dp] for dp in (1, 2, 3, 4)]
        assert all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(vals, vals[1:]))
        assert vals[0] < out["noisy"]


def test_each_gate_floor_is_global_residual():
    spec = _spec(depth=4, d0=None, eps2=0.0, glob=0.01)
    spec = spec.without_local_noise()
    out = channel_distances(spec, 5, [1])
    assert out["noisy"] == pytest.approx(each_gate_floor(spec), rel=1e-10)
    assert out["mitigated"][1] < each_gate_floor(spec)


def test_mitigation_helps_at_low_noise():
    wins = 0
    seeds = range(20)
    for seed in seeds:
        rec = run_pipeline(_spec(n=4, seed=seed, eps2=0.02, glob=0.02), PipelineParams(correction_eps1=1e-3))
        wins += rec.mitigated <= rec.unmitigated
    assert wins > len(seeds) / 2


def test_correction_layer_noise():
    spec = _spec(depth=4, d0=None, eps2=0.05)
    ni, _, _ = invert_part(spec, PipelineParams())
    assert ni.mpo.max_bond == 1 and len(ni.site_maps()) == 6
    assert correction_layer(ni) is ni.mpo
    noisy = correction_layer(ni, ("depolarizing", 1e-3), np.random.default_rng(0))
    assert noisy.max_bond == 1
    for t, m in zip(noisy.tensors, ni.site_maps()):
        assert not np.allclose(t[0, 0], m)
    wide2, _, _ = invert_part(spec, PipelineParams(d_prime=4))
    assert wide2.mpo.max_bond > 1
    with pytest.raises(ValueError):
        correction_layer(wide2, ("depolarizing", 1e-3))
    with pytest.raises(ValueError):
        wide2.site_maps()
    with pytest.raises(ValueError):
        noise_inverse(ni.mpo, ni.mpo, 0)


def test_trace_drift_detected():
    spec = _spec(n=8, depth=12, eps2=0.05)
    with pytest.raises(TraceDriftError):
        simulate_state(spec.layers, 8, StateSimConfig(chi=4))
    rho = simulate_state(spec.layers, 8, StateSimConfig(chi=4, trace_budget=np.inf))
    assert max(rho.bond_dims) <= 4


def test_run_record_serialization():
    spec = _spec(seed=3, glob=0.05)
    params = PipelineParams(correction_eps1=1e-3)
    a, b = run_pipeline(spec, params), run_pipeline(spec, params)
    assert a.csv_row() == b.csv_row()
    row = a.csv_row()
    assert list(row) == list(QemRunRecord.CSV_FIELDS)
    assert row["parts"] == 2 and row["all_converged"] == 1
    assert float(row["ratio"]) == pytest.approx(a.mitigated / a.unmitigated)
    d = a.to_dict()
    assert len(d["parts"]) == 2 and d["parts"][0]["mitigated_channel"] < d["parts"][0]["unmitigated_channel"]


def test_initial_state_override():
    spec = _spec(depth=4, d0=None)
    plus = VecStateMps.product([np.array([1, 1, 1, 1]) / 2] * 6)
    rho = simulate_state(spec.layers, 6, initial=plus)
    assert rho.trace() == pytest.approx(1.0)
