"""Error-mitigation pipeline built on MPO inverses.

For each part ``k`` of a partitioned circuit:

1. compile the noisy part into an MPO ``U_k`` (stands in for tomography),
2. fit ``U_k^-1`` variationally,
3. form the inverse noise channel ``E_k^-1 = U0_k o U_k^-1`` and truncate it to ``D'``,
4. insert ``E_k^-1`` right after part ``k``, optionally followed by
   single-qubit depolarizing noise modelling imperfect corrections.

The output state of the mitigated circuit is compared with the ideal and the
unmitigated output states.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .channels import NoiseKind, global_depolarizing_mpo, make_noise_superop, sample_rate
from .circuit import CircuitSpec, LayerSpec, compile_ideal_mpo, compile_noisy_mpo, layer_mpo, partition
from .inverse import InverseReport, mpo_inverse
from .mpo import (
    DEFAULT_CUTOFF,
    Mpo,
    TruncationReport,
    VecStateMps,
    apply_mpo_layer,
    compose,
    identity_mpo,
    relative_distance_mpo,
    relative_distance_state,
    truncate,
)

log = logging.getLogger(__name__)


class TraceDriftError(RuntimeError):
    """The simulated state lost trace beyond the configured budget."""


@dataclass
class NoiseInverse:
    """Truncated inverse-noise channel of one circuit part."""

    part_index: int
    mpo: Mpo
    d_prime: int
    inverse_bond: int | None = None
    inverse_report: InverseReport | None = None
    truncation: TruncationReport = field(default_factory=TruncationReport)

    def site_maps(self) -> list[np.ndarray]:
        """The 4x4 per-site maps of a bond-1 inverse."""
        if self.mpo.max_bond != 1:
            raise ValueError(f"noise inverse has bond {self.mpo.max_bond}; it does not factorize")
        return [t[0, 0] for t in self.mpo.tensors]


@dataclass(frozen=True)
class StateSimConfig:
    """State evolution settings.

    Attributes:
        chi: Bond cap of the state MPS; ``None`` keeps everything above ``cutoff``.
        cutoff: Relative singular-value cutoff.
        trace_budget: Allowed ``|Tr rho - 1|`` at the end of a run.
    """

    chi: int | None = None
    cutoff: float = DEFAULT_CUTOFF
    trace_budget: float = 1e-6

    def __post_init__(self) -> None:
        if self.chi is not None and self.chi < 1:
            raise ValueError("chi must be >= 1")


@dataclass(frozen=True)
class PipelineParams:
    """Bond dimensions and correction-noise settings of one mitigation run.

    Attributes:
        bond_dim: Cap on the compiled noisy part MPO; ``None`` means exact.
        inverse_bond: Bond dimension of the variational inverse.
        d_prime: Bond dimension kept in the inverse noise channel.
        correction_eps1: Average rate of the depolarizing noise after each
            single-qubit correction; 0 disables it.
        correction_spread: Relative spread of per-site correction rates.
        max_sweeps: Sweep budget of the inverse.
        tol: Convergence tolerance of the inverse.
        sim: State simulation settings.
        compute_channel_distances: Also evaluate per-part channel distances.
    """

    bond_dim: int | None = 5
    inverse_bond: int = 5
    d_prime: int = 1
    correction_eps1: float = 0.0
    correction_spread: float = 0.2
    max_sweeps: int = 30
    tol: float = 1e-15
    sim: StateSimConfig = StateSimConfig()
    compute_channel_distances: bool = True


@dataclass
class PartDiagnostics:
    index: int
    noisy_bond: int
    inverse_converged: bool
    inverse_sweeps: int
    inverse_error: float
    unmitigated_channel: float | None = None
    mitigated_channel: float | None = None


@dataclass
class QemRunRecord:
    """Result of :func:`run_pipeline` for one circuit instance."""

    config: dict
    unmitigated: float
    mitigated: float
    parts: list[PartDiagnostics] = field(default_factory=list)
    wall_clock: float = 0.0

    CSV_FIELDS = (
        "seed",
        "n_qubits",
        "depth",
        "parts",
        "bond_dim",
        "inverse_bond",
        "d_prime",
        "correction_eps1",
        "unmitigated",
        "mitigated",
        "ratio",
        "all_converged",
    )

    @property
    def ratio(self) -> float:
        return self.mitigated / self.unmitigated if self.unmitigated > 0 else float("nan")

    def csv_row(self) -> dict:
        c = self.config
        return {
            "seed": c.get("seed"),
            "n_qubits": c.get("n_qubits"),
            "depth": c.get("depth"),
            "parts": c.get("parts"),
            "bond_dim": c.get("bond_dim"),
            "inverse_bond": c.get("inverse_bond"),
            "d_prime": c.get("d_prime"),
            "correction_eps1": c.get("correction_eps1"),
            "unmitigated": repr(self.unmitigated),
            "mitigated": repr(self.mitigated),
            "ratio": repr(self.ratio),
            "all_converged": int(all(p.inverse_converged for p in self.parts)),
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "unmitigated": self.unmitigated,
            "mitigated": self.mitigated,
            "parts": [dataclasses.asdict(p) for p in self.parts],
            "wall_clock": self.wall_clock,
        }


def noise_inverse(
    part_ideal: Mpo,
    part_noisy_inverse: Mpo,
    d_prime: int,
    part_index: int = 0,
    cutoff: float = DEFAULT_CUTOFF,
) -> NoiseInverse:
    """``E^-1 = U0 o U^-1`` compressed to bond ``d_prime``."""
    if d_prime < 1:
        raise ValueError("d_prime must be >= 1")
    full = compose(part_ideal, part_noisy_inverse)
    mpo, rep = truncate(full, d_prime, cutoff)
    return NoiseInverse(part_index, mpo, d_prime, part_noisy_inverse.max_bond, truncation=rep)


def correction_layer(
    ni: NoiseInverse,
    correction_noise: tuple[NoiseKind | str, float] | None = None,
    rng: np.random.Generator | None = None,
    spread: float = 0.2,
) -> Mpo:
    """The MPO inserted after a part.

    Without ``correction_noise`` this is the inverse noise channel itself. With
    it, each site's 4x4 map is followed by the given single-qubit channel at a
    rate drawn per site around the average, which needs a bond-1 inverse.

    Raises:
        ValueError: If noise is requested for an inverse with bond above 1.
    """
    if correction_noise is None:
        return ni.mpo
    kind, avg = correction_noise
    if ni.mpo.max_bond != 1:
        raise ValueError("noisy corrections are only modelled for single-qubit (D'=1) inverses")
    if avg == 0.0:
        return ni.mpo
    rng = rng if rng is not None else np.random.default_rng()
    sites = []
    for m in ni.site_maps():
        rate = sample_rate(rng, avg, spread)
        noise = make_noise_superop(kind, rate, 1).matrix
        sites.append((noise @ m)[None, None])
    return Mpo(sites)


Step = Union[LayerSpec, Mpo]


def simulate_state(
    steps: Sequence[Step],
    n_qubits: int,
    sim: StateSimConfig = StateSimConfig(),
    ideal: bool = False,
    initial: VecStateMps | None = None,
) -> VecStateMps:
    """Evolve ``|0...0>>`` through circuit layers and inserted MPOs.

    ``LayerSpec`` entries are applied gate layer first, then their global
    channel (skipped when ``ideal``); ``Mpo`` entries are applied as given.

    Raises:
        TraceDriftError: If the final trace is off by more than the budget.
    """
    state = initial.copy() if initial is not None else VecStateMps.zeros(n_qubits)
    for step in steps:
        if isinstance(step, Mpo):
            state = apply_mpo_layer(state, step, sim.chi, sim.cutoff)
            continue
        state = apply_mpo_layer(state, layer_mpo(step, n_qubits, ideal), sim.chi, sim.cutoff)
        if not ideal and step.global_noise is not None:
            glob = global_depolarizing_mpo(n_qubits, step.global_noise)
            state = apply_mpo_layer(state, glob, sim.chi, sim.cutoff)
    drift = abs(state.trace() - 1.0)
    if drift > sim.trace_budget:
        raise TraceDriftError(f"trace drift {drift:.2e} exceeds {sim.trace_budget:.0e}; raise chi")
    return state


def state_distance(rho: VecStateMps, rho0: VecStateMps) -> float:
    """``||rho - rho0||_F^2 / sqrt(||rho||_F^2 ||rho0||_F^2)`` from MPS overlaps."""
    return relative_distance_state(rho, rho0)


def invert_part(
    part: CircuitSpec, params: PipelineParams, index: int = 0, seed: int = 0
) -> tuple[NoiseInverse, Mpo, Mpo]:
    """Compile one part and build its truncated inverse noise channel.

    Returns the inverse together with the compiled noisy and ideal MPOs.
    """
    u, _ = compile_noisy_mpo(part, params.bond_dim, params.sim.cutoff)
    u0 = compile_ideal_mpo(part)
    inv, rep = mpo_inverse(u, params.inverse_bond, params.max_sweeps, params.tol, seed=seed)
    ni = noise_inverse(u0, inv, params.d_prime, index, params.sim.cutoff)
    ni.inverse_report = rep
    return ni, u, u0


def each_gate_floor(spec: CircuitSpec) -> float:
    """Channel distance left over when every local error is removed perfectly."""
    residual = compile_noisy_mpo(spec.without_local_noise())[0]
    return relative_distance_mpo(residual, compile_ideal_mpo(spec))


def run_pipeline(spec: CircuitSpec, params: PipelineParams = PipelineParams()) -> QemRunRecord:
    """Mitigate ``spec`` part by part and compare output states with the ideal one."""
    start = time.perf_counter()
    n = spec.n_qubits
    parts = partition(spec)
    corr_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x51]))
    mitigated_steps: list[Step] = []
    diags: list[PartDiagnostics] = []
    for k, part in enumerate(parts):
        ni, u, u0 = invert_part(part, params, k, seed=spec.seed)
        noise = (NoiseKind.DEPOLARIZING, params.correction_eps1) if params.correction_eps1 > 0 else None
        corr = correction_layer(ni, noise, corr_rng, params.correction_spread)
        rep = ni.inverse_report
        diag = PartDiagnostics(k, u.max_bond, rep.converged, rep.sweeps_used, rep.normalized_final_error)
        if params.compute_channel_distances:
            diag.unmitigated_channel = relative_distance_mpo(u, u0)
            diag.mitigated_channel = relative_distance_mpo(compose(corr, u), u0)
        diags.append(diag)
        mitigated_steps.extend(part.layers)
        mitigated_steps.append(corr)
        if not rep.converged:
            log.warning("part %d: inverse not converged after %d sweeps", k, rep.sweeps_used)
    rho0 = simulate_state(spec.layers, n, params.sim, ideal=True)
    rho = simulate_state(spec.layers, n, params.sim)
    rho_mit = simulate_state(mitigated_steps, n, dataclasses.replace(params.sim, trace_budget=np.inf))
    config = {
        "seed": spec.seed,
        "n_qubits": n,
        "depth": spec.depth,
        "parts": len(parts),
        "bond_dim": params.bond_dim,
        "inverse_bond": params.inverse_bond,
        "d_prime": params.d_prime,
        "correction_eps1": params.correction_eps1,
        "chi": params.sim.chi,
    }
    return QemRunRecord(
        config=config,
        unmitigated=state_distance(rho, rho0),
        mitigated=state_distance(rho_mit, rho0),
        parts=diags,
        wall_clock=time.perf_counter() - start,
    )


def channel_distances(spec: CircuitSpec, inverse_bond: int, d_primes: Sequence[int], seed: int = 0) -> dict:
    """Channel-level figures for one part.

    Returns ``D(U, U0)``, ``D(U'U, 1)`` and ``D(E^-1 U, U0)`` for each ``D'``.
    """
    u, _ = compile_noisy_mpo(spec)
    u0 = compile_ideal_mpo(spec)
    inv, rep = mpo_inverse(u, inverse_bond, seed=seed)
    out = {
        "noisy": relative_distance_mpo(u, u0),
        "inverse": relative_distance_mpo(compose(inv, u), identity_mpo(spec.n_qubits)),
        "report": rep,
        "mitigated": {},
    }
    for dp in d_primes:
        ni = noise_inverse(u0, inv, dp)
        out["mitigated"][dp] = relative_distance_mpo(compose(ni.mpo, u), u0)
    return out


__all__ = [
    "NoiseInverse",
    "PartDiagnostics",
    "PipelineParams",
    "QemRunRecord",
    "StateSimConfig",
    "TraceDriftError",
    "channel_distances",
    "correction_layer",
    "each_gate_floor",
    "invert_part",
    "noise_inverse",
    "run_pipeline",
    "simulate_state",
    "state_distance",
]
