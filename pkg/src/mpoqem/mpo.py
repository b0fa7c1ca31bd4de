"""Matrix product operators over vectorized qubits.

Site tensors of an :class:`Mpo` use the index order ``(left, right, out, in)``
with physical dimension 4 on both legs (a vectorized qubit). Canonical forms and
truncations treat the two physical legs as one grouped 16-dim leg, so all chain
algorithms operate on rank-3 tensors ``(left, right, phys)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dense import SUPEROP_QUBIT_CAP, DenseState, DenseSuperOp, DimensionError

DEFAULT_CUTOFF = 1e-14
_VEC_ID = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)


@dataclass
class TruncationReport:
    """Squared singular values discarded at each cut, in the order they were cut."""

    discarded: list[float] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(self.discarded))

    def extend(self, other: TruncationReport) -> None:
        self.discarded.extend(other.discarded)


# ---------------------------------------------------------------------------
# rank-3 chain kernels


def svd_split(mat: np.ndarray, max_bond: int | None, cutoff: float):
    """SVD with truncation; returns ``u, s, vh, discarded_weight``.

    Singular values below ``cutoff * s_max`` are dropped, then at most
    ``max_bond`` are kept. At least one value always survives.
    """
    try:
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        import scipy.linalg

        u, s, vh = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
    keep = int(np.count_nonzero(s > cutoff * s[0])) if s[0] > 0 else 1
    keep = max(keep, 1)
    if max_bond is not None:
        keep = min(keep, max_bond)
    discarded = float(np.sum(s[keep:] ** 2))
    return u[:, :keep], s[:keep], vh[:keep], discarded


def left_orthonormalize(chain: list[np.ndarray], stop: int) -> None:
    """QR sweep making sites ``0..stop-1`` left-isometric, in place."""
    for j in range(stop):
        l, r, p = chain[j].shape
        q, rr = np.linalg.qr(chain[j].transpose(0, 2, 1).reshape(l * p, r))
        k = q.shape[1]
        chain[j] = q.reshape(l, p, k).transpose(0, 2, 1)
        chain[j + 1] = np.tensordot(rr, chain[j + 1], axes=(1, 0))


def right_orthonormalize(chain: list[np.ndarray], stop: int) -> None:
    """LQ sweep making sites ``stop+1..n-1`` right-isometric, in place."""
    for j in range(len(chain) - 1, stop, -1):
        l, r, p = chain[j].shape
        q, rr = np.linalg.qr(chain[j].reshape(l, r * p).T)
        k = q.shape[1]
        chain[j] = q.T.reshape(k, r, p)
        chain[j - 1] = np.tensordot(chain[j - 1], rr.T, axes=(1, 0)).transpose(0, 2, 1)


def canonicalize_chain(chain: Sequence[np.ndarray], center: int) -> list[np.ndarray]:
    out = [t.copy() for t in chain]
    left_orthonormalize(out, center)
    right_orthonormalize(out, center)
    return out


def truncate_chain(
    chain: Sequence[np.ndarray],
    max_bond: int | None,
    cutoff: float = DEFAULT_CUTOFF,
    left_canonical: bool = False,
) -> tuple[list[np.ndarray], TruncationReport]:
    """Right-to-left SVD sweep over a left-canonical chain.

    The result is right-canonical with its center at site 0.
    """
    out = [t.copy() for t in chain]
    if not left_canonical:
        left_orthonormalize(out, len(out) - 1)
    report = TruncationReport()
    for j in range(len(out) - 1, 0, -1):
        l, r, p = out[j].shape
        u, s, vh, disc = svd_split(out[j].reshape(l, r * p), max_bond, cutoff)
        report.discarded.append(disc)
        k = s.size
        out[j] = vh.reshape(k, r, p)
        out[j - 1] = np.tensordot(out[j - 1], u * s, axes=(1, 0)).transpose(0, 2, 1)
    return out, report


def chain_overlap(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> complex:
    """``<b|a>`` of two rank-3 chains with matching physical dims."""
    if len(a) != len(b):
        raise DimensionError(f"site counts differ: {len(a)} vs {len(b)}")
    env = np.ones((1, 1), dtype=complex)
    for x, y in zip(a, b):
        if x.shape[2] != y.shape[2]:
            raise DimensionError("physical dimensions differ")
        env = np.einsum("ab,acp,bdp->cd", env, x, y.conj(), optimize=True)
    return complex(env[0, 0])


def _bond_dims(tensors: Sequence[np.ndarray]) -> list[int]:
    return [tensors[0].shape[0]] + [t.shape[1] for t in tensors]


def _check_bonds(tensors: Sequence[np.ndarray]) -> None:
    if not tensors:
        raise DimensionError("empty tensor chain")
    if tensors[0].shape[0] != 1 or tensors[-1].shape[1] != 1:
        raise DimensionError("boundary bonds must be 1")
    for j in range(len(tensors) - 1):
        if tensors[j].shape[1] != tensors[j + 1].shape[0]:
            raise DimensionError(f"bond mismatch between sites {j} and {j + 1}")


# ---------------------------------------------------------------------------
# operators


class Mpo:
    """Superoperator as a chain of ``(left, right, out, in)`` tensors."""

    def __init__(self, tensors: Iterable[np.ndarray]):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        _check_bonds(self.tensors)
        for t in self.tensors:
            if t.ndim != 4:
                raise DimensionError(f"MPO site tensors are rank 4, got shape {t.shape}")

    def __len__(self) -> int:
        return len(self.tensors)

    def __repr__(self) -> str:
        return f"Mpo(n_sites={len(self)}, bonds={self.bond_dims})"

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return _bond_dims(self.tensors)

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    @property
    def phys_dims(self) -> list[tuple[int, int]]:
        return [t.shape[2:] for t in self.tensors]

    def copy(self) -> Mpo:
        return Mpo([t.copy() for t in self.tensors])

    def as_chain(self) -> list[np.ndarray]:
        return [t.reshape(t.shape[0], t.shape[1], -1) for t in self.tensors]

    @classmethod
    def from_chain(cls, chain: Sequence[np.ndarray], phys: Sequence[tuple[int, int]]) -> Mpo:
        return cls([c.reshape(c.shape[0], c.shape[1], *p) for c, p in zip(chain, phys)])

    def dagger(self) -> Mpo:
        """Adjoint superoperator: conjugate and swap the physical legs per site."""
        return Mpo([t.conj().transpose(0, 1, 3, 2) for t in self.tensors])

    def canonicalize(self, center: int) -> Mpo:
        return Mpo.from_chain(canonicalize_chain(self.as_chain(), center), self.phys_dims)

    def scale(self, factor: complex) -> Mpo:
        out = self.copy()
        out.tensors[0] = out.tensors[0] * factor
        return out

    def norm2(self) -> float:
        return float(inner(self, self).real)

    def to_dense(self) -> DenseSuperOp:
        return mpo_to_dense(self)

    def save(self, path) -> None:
        from .serialize import save_tensors

        save_tensors(path, self.tensors, kind="mpo")

    @classmethod
    def load(cls, path) -> Mpo:
        from .serialize import load_tensors

        return cls(load_tensors(path, kind="mpo"))


class VecStateMps:
    """Vectorized density matrix ``|rho>>`` as a chain of ``(left, right, 4)`` tensors."""

    def __init__(self, tensors: Iterable[np.ndarray]):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        _check_bonds(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def __repr__(self) -> str:
        return f"VecStateMps(n_sites={len(self)}, bonds={self.bond_dims})"

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return _bond_dims(self.tensors)

    def copy(self) -> VecStateMps:
        return VecStateMps([t.copy() for t in self.tensors])

    @classmethod
    def product(cls, site_vectors: Sequence[np.ndarray]) -> VecStateMps:
        return cls([np.asarray(v, dtype=complex).reshape(1, 1, -1) for v in site_vectors])

    @classmethod
    def zeros(cls, n: int) -> VecStateMps:
        """The product state ``|0...0><0...0|``."""
        return cls.product([np.array([1.0, 0, 0, 0])] * n)

    @classmethod
    def from_dense(cls, state: DenseState, cutoff: float = DEFAULT_CUTOFF) -> VecStateMps:
        n = state.n_qubits
        chain = []
        rest = state.vec.reshape(1, -1)
        for _ in range(n - 1):
            left = rest.shape[0]
            u, s, vh, _ = svd_split(rest.reshape(left * 4, -1), None, cutoff)
            chain.append(u.reshape(left, 4, -1).transpose(0, 2, 1))
            rest = s[:, None] * vh
        chain.append(rest.reshape(rest.shape[0], 1, 4))
        return cls(chain)

    def to_dense(self) -> DenseState:
        vec = np.ones((1, 1), dtype=complex)
        for t in self.tensors:
            vec = np.einsum("xa,abp->xpb", vec, t).reshape(-1, t.shape[1])
        return DenseState(self.n_sites, vec[:, 0])

    def trace(self) -> complex:
        return chain_overlap(self.tensors, [_VEC_ID.reshape(1, 1, 4)] * self.n_sites)

    def norm2(self) -> float:
        return float(chain_overlap(self.tensors, self.tensors).real)

    def canonicalize(self, center: int) -> VecStateMps:
        return VecStateMps(canonicalize_chain(self.tensors, center))


class Lpdo:
    """Locally purified Choi form: sites ``(left, right, kraus, out, in)`` with qubit legs."""

    def __init__(self, tensors: Iterable[np.ndarray]):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        _check_bonds(self.tensors)
        for t in self.tensors:
            if t.ndim != 5 or t.shape[2] < 1:
                raise DimensionError(f"LPDO site tensors are rank 5, got shape {t.shape}")

    @property
    def bond_dims(self) -> list[int]:
        return _bond_dims(self.tensors)

    @property
    def kraus_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors]

    @classmethod
    def from_local_kraus(cls, site_kraus: Sequence[Sequence[np.ndarray]]) -> Lpdo:
        """Product LPDO whose site ``j`` purifies the channel with operation elements ``site_kraus[j]``."""
        return cls([np.stack([np.asarray(e, dtype=complex) for e in ks])[None, None] for ks in site_kraus])


def lpdo_to_mpo(lpdo: Lpdo) -> Mpo:
    """Contract each site with its conjugate over the Kraus leg.

    Bonds, outputs and inputs of the two copies are grouped pairwise, so bond
    dimensions square.
    """
    sites = []
    for x in lpdo.tensors:
        l, r, _, do, di = x.shape
        a = np.einsum("abkts,cdkuv->acbdtusv", x, x.conj())
        sites.append(a.reshape(l * l, r * r, do * do, di * di))
    return Mpo(sites)


def identity_mpo(n: int) -> Mpo:
    return Mpo([np.eye(4, dtype=complex)[None, None] for _ in range(n)])


def product_mpo(site_ops: Sequence[np.ndarray]) -> Mpo:
    return Mpo([np.asarray(op, dtype=complex)[None, None] for op in site_ops])


def split_two_site(op: np.ndarray, cutoff: float = DEFAULT_CUTOFF) -> tuple[np.ndarray, np.ndarray]:
    """Operator-Schmidt split of a 16x16 two-site superoperator into two MPO sites."""
    t = np.asarray(op).reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)
    u, s, vh, _ = svd_split(t, None, cutoff)
    k = s.size
    left = (u * np.sqrt(s)).reshape(4, 4, k).transpose(2, 0, 1)[None]
    right = (np.sqrt(s)[:, None] * vh).reshape(k, 4, 4)[:, None]
    return left, right


def random_mpo(n: int, bond: int, rng: np.random.Generator, phys: int = 4) -> Mpo:
    bonds = [1] + [bond] * (n - 1) + [1]
    return Mpo(
        [
            (rng.standard_normal((bonds[j], bonds[j + 1], phys, phys))
             + 1j * rng.standard_normal((bonds[j], bonds[j + 1], phys, phys))) / np.sqrt(2 * phys)
            for j in range(n)
        ]
    )


def mpo_to_dense(m: Mpo) -> DenseSuperOp:
    n = m.n_sites
    if n > SUPEROP_QUBIT_CAP:
        raise DimensionError(f"dense contraction capped at {SUPEROP_QUBIT_CAP} sites, got {n}")
    acc = np.ones((1, 1, 1), dtype=complex)  # (out, in, bond)
    for t in m.tensors:
        acc = np.einsum("xyb,bcts->xtysc", acc, t)
        o, d1, i, d2, r = acc.shape
        acc = acc.reshape(o * d1, i * d2, r)
    return DenseSuperOp(n, acc[:, :, 0])


def compose(a: Mpo, b: Mpo) -> Mpo:
    """Exact product ``a o b`` (``b`` acts first); bond dimensions multiply."""
    if a.n_sites != b.n_sites:
        raise DimensionError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    sites = []
    for x, y in zip(a.tensors, b.tensors):
        c = np.einsum("abtk,cdks->acbdts", x, y)
        sites.append(c.reshape(x.shape[0] * y.shape[0], x.shape[1] * y.shape[1], x.shape[2], y.shape[3]))
    return Mpo(sites)


def add(a: Mpo, b: Mpo, coeff_b: complex = 1.0) -> Mpo:
    """Block-diagonal sum ``a + coeff_b * b``."""
    if a.n_sites != b.n_sites:
        raise DimensionError("site counts differ")
    n = a.n_sites
    if n == 1:
        return Mpo([a.tensors[0] + coeff_b * b.tensors[0]])
    sites = []
    for j, (x, y) in enumerate(zip(a.tensors, b.tensors)):
        y = y * coeff_b if j == 0 else y
        if j == 0:
            sites.append(np.concatenate([x, y], axis=1))
        elif j == n - 1:
            sites.append(np.concatenate([x, y], axis=0))
        else:
            z = np.zeros((x.shape[0] + y.shape[0], x.shape[1] + y.shape[1]) + x.shape[2:], dtype=complex)
            z[: x.shape[0], : x.shape[1]] = x
            z[x.shape[0]:, x.shape[1]:] = y
            sites.append(z)
    return Mpo(sites)


def truncate(
    m: Mpo, max_bond: int | None, svd_cutoff: float = DEFAULT_CUTOFF
) -> tuple[Mpo, TruncationReport]:
    """Mixed-canonical SVD compression; the result is right-canonical about site 0."""
    chain, report = truncate_chain(m.as_chain(), max_bond, svd_cutoff)
    return Mpo.from_chain(chain, m.phys_dims), report


def _zip_up(target: list[np.ndarray], layer: list[np.ndarray], cutoff: float, is_state: bool):
    """Contract ``layer`` onto a right-canonical ``target`` from the left, splitting per site.

    Returns a left-canonical rank-3 chain (center on the last site).
    """
    out = []
    carry = np.ones((1, 1, 1), dtype=complex)  # (new bond, target bond, layer bond)
    n = len(target)
    for j in range(n):
        t, w = target[j], layer[j]
        if is_state:
            # t: (a, b, k), w: (c, d, p, k)
            x = np.einsum("xac,abk,cdpk->xpbd", carry, t, w, optimize=True)
        else:
            # t: (a, b, k, s), w: (c, d, p, k)
            x = np.einsum("xac,abks,cdpk->xpsbd", carry, t, w, optimize=True)
            s0, s1, s2, s3, s4 = x.shape
            x = x.reshape(s0, s1 * s2, s3, s4)
        xl, p, rb, rl = x.shape
        if j == n - 1:
            out.append(x.reshape(xl, p, 1).transpose(0, 2, 1))
            break
        u, s, vh, _ = svd_split(x.reshape(xl * p, rb * rl), None, cutoff)
        k = s.size
        out.append(u.reshape(xl, p, k).transpose(0, 2, 1))
        carry = (s[:, None] * vh).reshape(k, rb, rl)
    return out


def apply_mpo_layer(
    target: Mpo | VecStateMps,
    layer: Mpo,
    max_bond: int | None = None,
    svd_cutoff: float = DEFAULT_CUTOFF,
    report: TruncationReport | None = None,
):
    """Return ``layer o target`` (or ``layer |target>>``), compressed.

    Zip-up contraction against a right-canonicalized target, followed by a
    right-to-left SVD sweep that enforces ``max_bond``. Discarded weights of that
    sweep are appended to ``report`` when given.
    """
    if len(target) != layer.n_sites:
        raise DimensionError(f"site counts differ: {len(target)} vs {layer.n_sites}")
    is_state = isinstance(target, VecStateMps)
    if is_state:
        tchain = canonicalize_chain(target.tensors, 0)
    else:
        tchain = [
            c.reshape(c.shape[0], c.shape[1], *p)
            for c, p in zip(canonicalize_chain(target.as_chain(), 0), target.phys_dims)
        ]
    zipped = _zip_up(tchain, layer.tensors, svd_cutoff, is_state)
    chain, rep = truncate_chain(zipped, max_bond, svd_cutoff, left_canonical=True)
    if report is not None:
        report.extend(rep)
    if is_state:
        return VecStateMps(chain)
    phys = [(w.shape[2], t.shape[3]) for w, t in zip(layer.tensors, tchain)]
    return Mpo.from_chain(chain, phys)


def inner(a: Mpo, b: Mpo) -> complex:
    """``Tr[a b^dag]`` by left-to-right transfer matrices."""
    return chain_overlap(a.as_chain(), b.as_chain())


def relative_distance_mpo(a: Mpo, b: Mpo) -> float:
    """``||a-b||_F^2 / sqrt(||a||_F^2 ||b||_F^2)`` from three inner products."""
    naa, nbb = inner(a, a).real, inner(b, b).real
    if naa <= 0.0 or nbb <= 0.0:
        raise ZeroDivisionError("relative distance of a zero-norm MPO")
    nab = inner(a, b).real
    return float(max(naa + nbb - 2 * nab, 0.0) / np.sqrt(naa * nbb))


def state_overlap(a: VecStateMps, b: VecStateMps) -> complex:
    return chain_overlap(a.tensors, b.tensors)


def relative_distance_state(a: VecStateMps, b: VecStateMps) -> float:
    naa, nbb = a.norm2(), b.norm2()
    if naa <= 0.0 or nbb <= 0.0:
        raise ZeroDivisionError("relative distance of a zero-norm state")
    nab = state_overlap(a, b).real
    return float(max(naa + nbb - 2 * nab, 0.0) / np.sqrt(naa * nbb))


def trace_row(m: Mpo) -> list[np.ndarray]:
    """``<<1| m`` as a chain of ``(left, right, in)`` tensors."""
    return [np.einsum("t,abts->abs", _vec_id(t.shape[2]), t) for t in m.tensors]


def _vec_id(d: int) -> np.ndarray:
    q = int(round(np.sqrt(d)))
    return np.eye(q, dtype=complex).reshape(-1)


def trace_infidelity_mpo(m: Mpo) -> float:
    """``|<<1| - <<1| m|^2`` with ``<<1|`` a bond-1 product vector."""
    row = trace_row(m)
    ident = [_vec_id(t.shape[3]).reshape(1, 1, -1) for t in m.tensors]
    tt = chain_overlap(ident, ident).real
    tv = chain_overlap(row, ident).real
    vv = chain_overlap(row, row).real
    return float(max(tt - 2 * tv + vv, 0.0))


def is_left_isometric(t: np.ndarray, atol: float = 1e-12) -> bool:
    c = t.reshape(t.shape[0], t.shape[1], -1)
    g = np.einsum("abp,acp->bc", c, c.conj())
    return bool(np.allclose(g, np.eye(g.shape[0]), atol=atol))


def is_right_isometric(t: np.ndarray, atol: float = 1e-12) -> bool:
    c = t.reshape(t.shape[0], t.shape[1], -1)
    g = np.einsum("abp,cbp->ac", c, c.conj())
    return bool(np.allclose(g, np.eye(g.shape[0]), atol=atol))
