"""Exact dense superoperators and vectorized states.

Everything here is brute force and meant for small qubit counts. The tensor
network code is validated against these routines.

Vectorization convention: each qubit contributes a 4-dim index ``2*i + j`` for
the matrix unit ``|i><j|`` and qubits are ordered most-significant first. A
superoperator on ``n`` qubits is therefore a ``4**n x 4**n`` matrix whose row
index groups the output pairs ``(tau_1, ..., tau_n)`` and whose column index
groups the input pairs ``(sigma_1, ..., sigma_n)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

SUPEROP_QUBIT_CAP = 6
STATE_QUBIT_CAP = 10

# vectorized single-qubit identity, <<1| per site
_VEC_ID = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotCPTPError(ValueError):
    """Kraus operators violate the completeness relation."""


@dataclass(frozen=True)
class DenseSuperOp:
    """Dense superoperator of an ``n_qubits`` channel."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.n_qubits > SUPEROP_QUBIT_CAP:
            raise DimensionError(
                f"dense superoperators are capped at {SUPEROP_QUBIT_CAP} qubits, got {self.n_qubits}"
            )
        dim = 4**self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise DimensionError(f"expected {(dim, dim)} matrix, got {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return 4**self.n_qubits

    def __matmul__(self, other: DenseSuperOp) -> DenseSuperOp:
        return compose(self, other)


@dataclass(frozen=True)
class DenseState:
    """Vectorized density matrix ``|rho>>``."""

    n_qubits: int
    vec: np.ndarray

    def __post_init__(self) -> None:
        if self.n_qubits > STATE_QUBIT_CAP:
            raise DimensionError(f"dense states are capped at {STATE_QUBIT_CAP} qubits")
        if self.vec.shape != (4**self.n_qubits,):
            raise DimensionError(f"expected vector of length {4**self.n_qubits}, got {self.vec.shape}")

    def density_matrix(self) -> np.ndarray:
        return vec_to_density(self.vec, self.n_qubits)

    def trace(self) -> complex:
        return complex(trace_functional(self.n_qubits) @ self.vec)


def _grouping_perm(n: int) -> list[int]:
    # axes (i_1..i_n, j_1..j_n) -> (i_1, j_1, ..., i_n, j_n)
    perm = []
    for k in range(n):
        perm.extend([k, n + k])
    return perm


def density_to_vec(rho: np.ndarray) -> np.ndarray:
    """Vectorize a ``2**n x 2**n`` density matrix in site-grouped order."""
    dim = rho.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim or rho.shape != (dim, dim):
        raise DimensionError(f"not a qubit operator: shape {rho.shape}")
    t = np.asarray(rho, dtype=complex).reshape((2,) * (2 * n))
    return t.transpose(_grouping_perm(n)).reshape(-1)


def vec_to_density(vec: np.ndarray, n: int) -> np.ndarray:
    inv = np.argsort(_grouping_perm(n))
    t = np.asarray(vec).reshape((2,) * (2 * n)).transpose(inv)
    return t.reshape(2**n, 2**n)


def trace_functional(n: int) -> np.ndarray:
    """Return ``<<1|``, the vectorized identity on ``n`` qubits."""
    out = np.ones(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, _VEC_ID)
    return out


def identity(n: int) -> DenseSuperOp:
    return DenseSuperOp(n, np.eye(4**n, dtype=complex))


def state_from_density(rho: np.ndarray) -> DenseState:
    vec = density_to_vec(rho)
    return DenseState(int(round(np.log(vec.size) / np.log(4))), vec)


def zero_state(n: int) -> DenseState:
    vec = np.zeros(4**n, dtype=complex)
    vec[0] = 1.0
    return DenseState(n, vec)


def superop_from_kraus(kraus_ops: Sequence[np.ndarray], atol: float = 1e-10) -> DenseSuperOp:
    """Build ``sum_k E_k (x) E_k^*`` from operation elements.

    Args:
        kraus_ops: Square matrices of a common dimension ``2**k``.
        atol: Tolerance on ``sum_k E_k^dag E_k = 1``.

    Raises:
        DimensionError: If the operators are not square or disagree in size.
        NotCPTPError: If the completeness relation fails.
    """
    ops = [np.asarray(e, dtype=complex) for e in kraus_ops]
    if not ops:
        raise DimensionError("need at least one Kraus operator")
    dim = ops[0].shape[0]
    n = int(round(np.log2(dim)))
    for e in ops:
        if e.shape != (dim, dim):
            raise DimensionError(f"Kraus operators must all be {dim}x{dim}, got {e.shape}")
    if 2**n != dim:
        raise DimensionError(f"Kraus dimension {dim} is not a power of two")
    completeness = sum(e.conj().T @ e for e in ops)
    if not np.allclose(completeness, np.eye(dim), atol=atol, rtol=0.0):
        raise NotCPTPError("Kraus operators do not satisfy sum E^dag E = 1")
    mat = sum(np.kron(e, e.conj()) for e in ops)
    return DenseSuperOp(n, regroup_superop(mat, n))


def regroup_superop(mat: np.ndarray, n: int) -> np.ndarray:
    """Reorder a row-major ``E (x) E^*`` style matrix into site-grouped order."""
    perm = _grouping_perm(n)
    t = mat.reshape((2,) * (4 * n))
    t = t.transpose(perm + [2 * n + p for p in perm])
    return t.reshape(4**n, 4**n)


def unitary_superop(u: np.ndarray) -> DenseSuperOp:
    u = np.asarray(u, dtype=complex)
    n = int(round(np.log2(u.shape[0])))
    return DenseSuperOp(n, regroup_superop(np.kron(u, u.conj()), n))


def apply(op: DenseSuperOp, state: DenseState) -> DenseState:
    if op.n_qubits != state.n_qubits:
        raise DimensionError(f"operator on {op.n_qubits} qubits, state on {state.n_qubits}")
    return DenseState(state.n_qubits, op.matrix @ state.vec)


def compose(a: DenseSuperOp, b: DenseSuperOp) -> DenseSuperOp:
    """Return ``a o b``; ``b`` acts first."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"cannot compose {a.n_qubits}- and {b.n_qubits}-qubit channels")
    return DenseSuperOp(a.n_qubits, a.matrix @ b.matrix)


def apply_local(local: np.ndarray, target: np.ndarray, sites: Sequence[int], n: int) -> np.ndarray:
    """Apply a superoperator on ``sites`` to the leading axis of ``target``.

    ``target`` is either a vectorized state of length ``4**n`` or a superoperator
    matrix with ``4**n`` rows. Sites need not be adjacent but must be listed in the
    order matching ``local``'s grouping.
    """
    k = len(sites)
    trailing = target.shape[1:]
    t = target.reshape((4,) * n + trailing)
    op = np.asarray(local).reshape((4,) * (2 * k))
    t = np.tensordot(op, t, axes=(list(range(k, 2 * k)), list(sites)))
    # tensordot puts the new site axes first; move them back
    rest = [ax for ax in range(n) if ax not in sites]
    order = [0] * n
    for pos, s in enumerate(sites):
        order[s] = pos
    for pos, s in enumerate(rest):
        order[s] = k + pos
    t = t.transpose(order + list(range(n, n + len(trailing))))
    return t.reshape(target.shape)


def embed(local: DenseSuperOp, sites: Sequence[int], n: int) -> DenseSuperOp:
    """Embed a local channel into ``n`` qubits, identity elsewhere."""
    return DenseSuperOp(n, apply_local(local.matrix, np.eye(4**n, dtype=complex), sites, n))


def dense_inverse(op: DenseSuperOp, residual_tol: float = 1e-8) -> DenseSuperOp:
    """Invert via pivoted LU and check ``||A A^-1 - 1||_F``."""
    import scipy.linalg

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(op.matrix)
        inv = scipy.linalg.lu_solve((lu, piv), np.eye(op.dim, dtype=complex))
    with np.errstate(invalid="ignore", over="ignore"):
        resid = np.linalg.norm(op.matrix @ inv - np.eye(op.dim))
    if not np.isfinite(resid) or resid > residual_tol:
        raise np.linalg.LinAlgError(f"inverse residual {resid:.3e} exceeds {residual_tol:.1e}")
    return DenseSuperOp(op.n_qubits, inv)


Operand = Union[DenseSuperOp, DenseState, np.ndarray]


def _as_array(x: Operand) -> np.ndarray:
    if isinstance(x, DenseSuperOp):
        return x.matrix
    if isinstance(x, DenseState):
        return x.vec
    return np.asarray(x)


def relative_distance(a: Operand, b: Operand) -> float:
    """``||a - b||_F^2 / sqrt(||a||_F^2 ||b||_F^2)`` for channels or states."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    na, nb = np.vdot(x, x).real, np.vdot(y, y).real
    if na == 0.0 or nb == 0.0:
        raise ZeroDivisionError("relative distance of a zero-norm operand")
    return float(np.vdot(x - y, x - y).real / np.sqrt(na * nb))


def trace_infidelity(op: DenseSuperOp) -> float:
    """Squared deviation ``|<<1| - <<1|U|^2`` from trace preservation."""
    t = trace_functional(op.n_qubits)
    d = t - t @ op.matrix
    return float(np.vdot(d, d).real)


def choi_matrix(op: DenseSuperOp) -> np.ndarray:
    """Choi matrix ``sum_ij E(|i><j|) (x) |i><j|`` as a ``4**n x 4**n`` matrix.

    Rows index (output row, input row), columns (output col, input col).
    """
    n = op.n_qubits
    # superop indices: tau=(a_k, b_k) out, sigma=(c_k, d_k) in; Choi[(a,c),(b,d)]
    t = op.matrix.reshape((2, 2) * n + (2, 2) * n)
    out_row = [2 * k for k in range(n)]
    out_col = [2 * k + 1 for k in range(n)]
    in_row = [2 * n + 2 * k for k in range(n)]
    in_col = [2 * n + 2 * k + 1 for k in range(n)]
    t = t.transpose(out_row + in_row + out_col + in_col)
    return t.reshape(4**n, 4**n)


def is_cptp(op: DenseSuperOp, atol: float = 1e-10) -> bool:
    choi = choi_matrix(op)
    herm = np.allclose(choi, choi.conj().T, atol=atol)
    psd = np.linalg.eigvalsh((choi + choi.conj().T) / 2).min() >= -atol
    return bool(herm and psd and trace_infidelity(op) <= atol)
