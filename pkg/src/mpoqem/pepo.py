"""Two-dimensional circuits as PEPOs and their variational inverse.

A :class:`Pepo` holds one rank-6 tensor ``(up, down, left, right, out, in)`` per
qubit of a ``rows x cols`` grid. Scalars such as ``Tr[A B^dag]`` become planar
networks of rank-4 tensors, obtained by fusing each site with its partner
layer(s). Those networks are contracted with boundary MPSs absorbed row by row.

The inverse is fitted exactly as in one dimension, one site at a time. The
quadratic and linear environments of a site come from the boundary MPSs above
and below its row and from left/right row environments.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dense
from .channels import SINGLE_QUBIT_GATES, NoiseKind, sample_rate
from .circuit import GateOp, LayerSpec, apply_layer_dense
from .inverse import InverseReport, solve_site
from .mpo import DEFAULT_CUTOFF, DimensionError, split_two_site, svd_split, truncate_chain

log = logging.getLogger(__name__)

_VEC_ID = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)


class ContractionTooLarge(MemoryError):
    """A contraction would create an intermediate above the configured element budget."""


class BoundaryContractionError(RuntimeError):
    """Row-wise and column-wise contractions of the same network disagree."""


# ---------------------------------------------------------------------------
# guarded einsum


def _einsum(expr: str, *ops: np.ndarray, limit: float = np.inf) -> np.ndarray:
    """``np.einsum`` along the optimal pairwise path, refusing oversized intermediates."""
    path, _ = np.einsum_path(expr, *ops, optimize="optimal")
    inputs, output = expr.split("->")
    terms = inputs.split(",")
    dims: dict[str, int] = {}
    for term, op in zip(terms, ops):
        for ch, d in zip(term, op.shape):
            dims[ch] = d
    live = list(terms)
    largest = 0
    for pair in path[1:]:
        picked = [live[i] for i in pair]
        for i in sorted(pair, reverse=True):
            live.pop(i)
        rest = "".join(live) + output
        kept = "".join(dict.fromkeys(ch for ch in "".join(picked) if ch in rest))
        largest = max(largest, int(np.prod([dims[ch] for ch in kept], dtype=float)))
        live.append(kept)
    if largest > limit:
        raise ContractionTooLarge(f"contraction {expr} needs an intermediate of {largest:.3g} elements (limit {limit:.3g})")
    return np.einsum(expr, *ops, optimize=path)


# ---------------------------------------------------------------------------
# data types


def _check_grid(grid: Sequence[Sequence[np.ndarray]]) -> None:
    rows, cols = len(grid), len(grid[0])
    for i in range(rows):
        if len(grid[i]) != cols:
            raise DimensionError("ragged PEPO grid")
        for c in range(cols):
            t = grid[i][c]
            if t.ndim != 6:
                raise DimensionError(f"PEPO site ({i},{c}) has rank {t.ndim}, expected 6")
            if i == 0 and t.shape[0] != 1 or i == rows - 1 and t.shape[1] != 1:
                raise DimensionError(f"open boundary bond at ({i},{c}) must be 1")
            if c == 0 and t.shape[2] != 1 or c == cols - 1 and t.shape[3] != 1:
                raise DimensionError(f"open boundary bond at ({i},{c}) must be 1")
            if i + 1 < rows and t.shape[1] != grid[i + 1][c].shape[0]:
                raise DimensionError(f"vertical bond mismatch below ({i},{c})")
            if c + 1 < cols and t.shape[3] != grid[i][c + 1].shape[2]:
                raise DimensionError(f"horizontal bond mismatch right of ({i},{c})")


class Pepo:
    """Superoperator on a qubit grid; qubit ``(i, c)`` has linear index ``i * cols + c``."""

    def __init__(self, grid: Sequence[Sequence[np.ndarray]]):
        self.grid = [[np.asarray(t, dtype=complex) for t in row] for row in grid]
        _check_grid(self.grid)

    @property
    def rows(self) -> int:
        return len(self.grid)

    @property
    def cols(self) -> int:
        return len(self.grid[0])

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def max_bond(self) -> int:
        return max(max(t.shape[:4]) for row in self.grid for t in row)

    def link_bonds(self) -> tuple[np.ndarray, np.ndarray]:
        """Horizontal ``(rows, cols-1)`` and vertical ``(rows-1, cols)`` bond dimensions."""
        h = np.array([[self.grid[i][c].shape[3] for c in range(self.cols - 1)] for i in range(self.rows)], dtype=int)
        v = np.array([[self.grid[i][c].shape[1] for c in range(self.cols)] for i in range(self.rows - 1)], dtype=int)
        return h.reshape(self.rows, self.cols - 1), v.reshape(self.rows - 1, self.cols)

    def __repr__(self) -> str:
        return f"Pepo({self.rows}x{self.cols}, max_bond={self.max_bond})"

    def copy(self) -> Pepo:
        return Pepo([[t.copy() for t in row] for row in self.grid])

    def dagger(self) -> Pepo:
        return Pepo([[t.conj().transpose(0, 1, 2, 3, 5, 4) for t in row] for row in self.grid])

    def rotated(self) -> Pepo:
        """The same operator with the grid turned by 180 degrees."""
        return Pepo([[t.transpose(1, 0, 3, 2, 4, 5) for t in reversed(row)] for row in reversed(self.grid)])

    def to_dense(self) -> dense.DenseSuperOp:
        if self.n_sites > dense.SUPEROP_QUBIT_CAP:
            raise DimensionError(f"dense PEPOs are capped at {dense.SUPEROP_QUBIT_CAP} qubits")
        return dense.DenseSuperOp(self.n_sites, _contract_open(self.grid).reshape(4**self.n_sites, -1))

    def save(self, path) -> None:
        from .serialize import save_tensors

        save_tensors(path, [t for row in self.grid for t in row], kind="pepo", grid=(self.rows, self.cols))

    @classmethod
    def load(cls, path) -> Pepo:
        from .serialize import load_tensors

        tensors, (rows, cols) = load_tensors(path, kind="pepo", with_grid=True)
        return cls([tensors[i * cols:(i + 1) * cols] for i in range(rows)])


def _contract_open(grid: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """Dense contraction keeping all physical legs, ordered ``(out..., in...)``."""
    import string

    letters = iter(string.ascii_letters)
    rows, cols = len(grid), len(grid[0])
    vert = [[next(letters) for _ in range(cols)] for _ in range(rows + 1)]
    horiz = [[next(letters) for _ in range(cols + 1)] for _ in range(rows)]
    outs = [next(letters) for _ in range(rows * cols)]
    ins = [next(letters) for _ in range(rows * cols)]
    boundary = {vert[0][c] for c in range(cols)} | {vert[rows][c] for c in range(cols)}
    boundary |= {horiz[i][0] for i in range(rows)} | {horiz[i][cols] for i in range(rows)}
    terms, ops = [], []
    for i in range(rows):
        for c in range(cols):
            q = i * cols + c
            term = vert[i][c] + vert[i + 1][c] + horiz[i][c] + horiz[i][c + 1] + outs[q] + ins[q]
            # open boundary legs have dimension 1; drop them
            keep = [k for k, ch in enumerate(term) if ch not in boundary]
            terms.append("".join(term[k] for k in keep))
            ops.append(grid[i][c].reshape([grid[i][c].shape[k] for k in keep]))
    expr = ",".join(terms) + "->" + "".join(outs) + "".join(ins)
    return np.einsum(expr, *ops, optimize="greedy")


@dataclass(frozen=True)
class BoundaryContractionConfig:
    """Boundary-MPS settings.

    Attributes:
        chi: Bond cap of boundary MPSs; ``None`` lets :func:`pepo_inverse` pick
            ``D**2`` with ``D`` the bond of the operator whose norm is contracted.
        cutoff: Relative singular-value cutoff of boundary truncations.
        max_elements: Largest intermediate tensor allowed, in complex entries.
        consistency_tol: Allowed relative disagreement between row-wise and
            column-wise contraction of the final norm network.
    """

    chi: int | None = None
    cutoff: float = DEFAULT_CUTOFF
    max_elements: float = 2.0**25
    consistency_tol: float = 0.01

    def __post_init__(self) -> None:
        if self.chi is not None and self.chi < 1:
            raise ValueError("chi must be >= 1")
        if self.max_elements <= 0:
            raise ValueError("max_elements must be positive")
        if not self.consistency_tol >= 0:
            raise ValueError("consistency_tol must be non-negative")


# ---------------------------------------------------------------------------
# 2D circuits


@dataclass(frozen=True)
class Circuit2DSpec:
    """Layered circuit on a ``rows x cols`` grid; two-qubit gates act on grid neighbours."""

    rows: int
    cols: int
    layers: tuple[LayerSpec, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        n = self.rows * self.cols
        for layer in self.layers:
            for g in layer.gates:
                if any(q < 0 or q >= n for q in g.qubits):
                    raise ValueError(f"gate {g.name} on {g.qubits} outside the grid")
                if len(g.qubits) == 2:
                    a, b = g.qubits
                    horizontal = b == a + 1 and a // self.cols == b // self.cols
                    if not horizontal and b != a + self.cols:
                        raise ValueError(f"two-qubit gate on non-neighbours {g.qubits}")

    @property
    def n_qubits(self) -> int:
        return self.rows * self.cols

    @property
    def depth(self) -> int:
        return len(self.layers)

    def without_noise(self) -> Circuit2DSpec:
        layers = tuple(LayerSpec(tuple(GateOp(g.name, g.qubits) for g in layer.gates)) for layer in self.layers)
        return dataclasses.replace(self, layers=layers)


def generate_test_circuit_2d(
    rows: int,
    cols: int,
    depth: int,
    seed: int,
    eps2: float = 0.01,
    eps1: float | None = None,
    family: str = "depolarizing",
    spread: float = 0.2,
) -> Circuit2DSpec:
    """Random grid circuit: CNOT layers alternate with random single-qubit layers.

    Successive CNOT layers alternate between horizontal and vertical pairs, and
    layers of the same direction alternate their pairing offset.
    """
    if rows < 1 or cols < 1 or depth < 1:
        raise ValueError("grid dimensions and depth must be positive")
    gate_rng, rate_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    kind = None if family == "none" else NoiseKind(family)
    eps1 = eps2 / 10 if eps1 is None else eps1

    def attach(name: str, qubits: tuple[int, ...]) -> GateOp:
        if kind is None:
            return GateOp(name, qubits)
        avg = eps2 if len(qubits) == 2 else eps1
        return GateOp(name, qubits, kind, sample_rate(rate_rng, avg, spread))

    layers = []
    n_cnot = 0
    for k in range(depth):
        if k % 2 == 0:
            horizontal = n_cnot % 2 == 0
            offset = (n_cnot // 2) % 2
            n_cnot += 1
            pairs = []
            if horizontal:
                for i in range(rows):
                    pairs += [(i * cols + c, i * cols + c + 1) for c in range(offset, cols - 1, 2)]
            else:
                for c in range(cols):
                    pairs += [(i * cols + c, (i + 1) * cols + c) for i in range(offset, rows - 1, 2)]
            layers.append(LayerSpec(tuple(attach("CNOT", p) for p in pairs)))
        else:
            names = gate_rng.integers(len(SINGLE_QUBIT_GATES), size=rows * cols)
            layers.append(LayerSpec(tuple(attach(SINGLE_QUBIT_GATES[int(g)], (q,)) for q, g in enumerate(names))))
    return Circuit2DSpec(rows, cols, tuple(layers), seed)


def compile_dense_2d(spec: Circuit2DSpec, ideal: bool = False) -> dense.DenseSuperOp:
    n = spec.n_qubits
    mat = np.eye(4**n, dtype=complex)
    for layer in spec.layers:
        mat = apply_layer_dense(layer, mat, n, ideal)
    return dense.DenseSuperOp(n, mat)


def identity_pepo(rows: int, cols: int) -> Pepo:
    eye = np.eye(4, dtype=complex).reshape(1, 1, 1, 1, 4, 4)
    return Pepo([[eye.copy() for _ in range(cols)] for _ in range(rows)])


def _truncate_link(p: np.ndarray, q: np.ndarray, ax_p: int, ax_q: int, max_bond: int | None, cutoff: float):
    """Compress the bond joining leg ``ax_p`` of ``p`` to leg ``ax_q`` of ``q``."""
    pm = np.moveaxis(p, ax_p, -1)
    qm = np.moveaxis(q, ax_q, 0)
    qp, rp = np.linalg.qr(pm.reshape(-1, pm.shape[-1]))
    qq, rq = np.linalg.qr(qm.reshape(qm.shape[0], -1).T)
    u, s, vh, _ = svd_split(rp @ rq.T, max_bond, cutoff)
    sq = np.sqrt(s)
    new_p = (qp @ (u * sq)).reshape(pm.shape[:-1] + (s.size,))
    new_q = ((sq[:, None] * vh) @ qq.T).reshape((s.size,) + qm.shape[1:])
    return np.moveaxis(new_p, -1, ax_p), np.moveaxis(new_q, 0, ax_q)


def _apply_gate(grid: list[list[np.ndarray]], cols: int, op: np.ndarray, qubits, max_bond, cutoff) -> None:
    if len(qubits) == 1:
        i, c = divmod(qubits[0], cols)
        grid[i][c] = np.einsum("tk,udlrks->udlrts", op, grid[i][c])
        return
    (i0, c0), (i1, c1) = divmod(qubits[0], cols), divmod(qubits[1], cols)
    left, right = split_two_site(op, cutoff)
    a, b = left[0], right[:, 0]  # (k, out, in) each
    p, q = grid[i0][c0], grid[i1][c1]
    p = np.einsum("kts,udlrsx->udlrktx", a, p)
    q = np.einsum("kts,udlrsx->udlrktx", b, q)
    if i0 == i1:  # horizontal: grow p's right leg and q's left leg
        p = p.reshape(p.shape[0], p.shape[1], p.shape[2], -1, 4, 4)
        q = q.transpose(0, 1, 2, 4, 3, 5, 6)
        q = q.reshape(q.shape[0], q.shape[1], -1, q.shape[4], 4, 4)
        p, q = _truncate_link(p, q, 3, 2, max_bond, cutoff)
    else:  # vertical: grow p's down leg and q's up leg
        p = p.transpose(0, 1, 4, 2, 3, 5, 6).reshape(p.shape[0], -1, p.shape[2], p.shape[3], 4, 4)
        q = q.transpose(0, 4, 1, 2, 3, 5, 6).reshape(-1, q.shape[1], q.shape[2], q.shape[3], 4, 4)
        p, q = _truncate_link(p, q, 1, 0, max_bond, cutoff)
    grid[i0][c0], grid[i1][c1] = p, q


def pepo_from_circuit_2d(
    spec: Circuit2DSpec, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF, ideal: bool = False
) -> Pepo:
    """Absorb the circuit gate by gate into an identity PEPO.

    Every two-qubit gate is split across its link, and the link is then
    compressed locally to ``max_bond``.
    """
    pe = identity_pepo(spec.rows, spec.cols)
    grid = pe.grid
    for layer in spec.layers:
        for g in layer.gates:
            _apply_gate(grid, spec.cols, g.superop(ideal).matrix, g.qubits, max_bond, cutoff)
    return Pepo(grid)


# ---------------------------------------------------------------------------
# planar networks


def _fuse(t: np.ndarray, legs: int = 4) -> np.ndarray:
    """Merge interleaved leg groups ``(u1, d1, l1, r1, u2, d2, ...)`` into ``(u, d, l, r)``."""
    groups = t.ndim // legs
    order = [g * legs + k for k in range(legs) for g in range(groups)]
    t = t.transpose(order)
    shape = [int(np.prod(t.shape[k * groups:(k + 1) * groups])) for k in range(legs)]
    return t.reshape(shape)


def pair_site(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``sum_p x[..., p] conj(y[..., p])`` with virtual legs fused as ``(x, y)``."""
    k = x.ndim - 4
    t = np.tensordot(x, y.conj(), axes=(list(range(4, 4 + k)), list(range(4, 4 + k))))
    return _fuse(t)


def compose_site(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Site tensor of ``a o b``; virtual legs fused as ``(a, b)``."""
    t = np.tensordot(a, b, axes=(5, 4))  # u d l r t | u d l r s
    t = t.transpose(0, 5, 1, 6, 2, 7, 3, 8, 4, 9)
    sh = t.shape
    return t.reshape(sh[0] * sh[1], sh[2] * sh[3], sh[4] * sh[5], sh[6] * sh[7], sh[8], sh[9])


def trace_site(w: np.ndarray) -> np.ndarray:
    return np.einsum("udlrtt->udlr", w)


def _rows_of(grid: Sequence[Sequence[np.ndarray]], fn) -> list[list[np.ndarray]]:
    return [[fn(t) for t in row] for row in grid]


def _transpose_grid(net: Sequence[Sequence[np.ndarray]]) -> list[list[np.ndarray]]:
    rows, cols = len(net), len(net[0])
    return [[net[i][c].transpose(2, 3, 0, 1) for i in range(rows)] for c in range(cols)]


# ---------------------------------------------------------------------------
# boundary MPS contraction of planar networks of (u, d, l, r) tensors


def _trivial_boundary(cols: int) -> list[np.ndarray]:
    return [np.ones((1, 1, 1), dtype=complex) for _ in range(cols)]


def absorb_row(
    mps: Sequence[np.ndarray], row: Sequence[np.ndarray], cfg: BoundaryContractionConfig, chi: int | None
) -> list[np.ndarray]:
    """Contract a network row onto a boundary MPS whose physical legs meet the row's ``u`` legs."""
    chain = []
    for t, f in zip(mps, row):
        x = _einsum("abu,udlr->albrd", t, f, limit=cfg.max_elements)
        a, l, b, r, d = x.shape
        chain.append(x.reshape(a * l, b * r, d))
    out, _ = truncate_chain(chain, chi, cfg.cutoff)
    return out


def top_boundaries(net, cfg: BoundaryContractionConfig, chi: int | None) -> list[list[np.ndarray]]:
    """``out[i]`` contracts rows ``0..i-1``; its physical legs meet row ``i``."""
    out = [_trivial_boundary(len(net[0]))]
    for row in net[:-1]:
        out.append(absorb_row(out[-1], row, cfg, chi))
    return out


def bottom_boundaries(net, cfg: BoundaryContractionConfig, chi: int | None) -> list[list[np.ndarray]]:
    """``out[i]`` contracts rows ``i+1..`` upward; its physical legs meet row ``i``'s ``d`` legs."""
    rows = len(net)
    out: list = [None] * rows
    out[rows - 1] = _trivial_boundary(len(net[0]))
    for i in range(rows - 1, 0, -1):
        flipped = [f.transpose(1, 0, 2, 3) for f in net[i]]
        out[i - 1] = absorb_row(out[i], flipped, cfg, chi)
    return out


def _left_step(env, top, f, bot, limit):
    return _einsum("alb,axu,udlr,byd->xry", env, top, f, bot, limit=limit)


def _right_step(env, top, f, bot, limit):
    return _einsum("xry,axu,udlr,byd->alb", env, top, f, bot, limit=limit)


def right_environments(top, row, bot, limit) -> list[np.ndarray]:
    """``out[c]`` holds columns ``c+1..`` of a row sandwiched between boundaries."""
    cols = len(row)
    out: list = [None] * cols
    out[cols - 1] = np.ones((1, 1, 1), dtype=complex)
    for c in range(cols - 1, 0, -1):
        out[c - 1] = _right_step(out[c], top[c], row[c], bot[c], limit)
    return out


def site_environment(left, top, bot, right, limit) -> np.ndarray:
    """Everything but one site, as a tensor on that site's ``(u, d, l, r)`` legs."""
    return _einsum("alb,axu,byd,xry->udlr", left, top, bot, right, limit=limit)


def contract_network(net, cfg: BoundaryContractionConfig = BoundaryContractionConfig(), chi: int | None = None) -> complex:
    """Scalar value of a planar network by absorbing rows from the top."""
    mps = _trivial_boundary(len(net[0]))
    for row in net:
        mps = absorb_row(mps, row, cfg, chi)
    v = np.ones(1, dtype=complex)
    for t in mps:
        v = v @ t[:, :, 0]
    return complex(v[0])


def contraction_consistency(net, cfg: BoundaryContractionConfig = BoundaryContractionConfig(), chi: int | None = None):
    """Contract rows-first and columns-first; return both values and their relative gap."""
    by_rows = contract_network(net, cfg, chi)
    by_cols = contract_network(_transpose_grid(net), cfg, chi)
    scale = max(abs(by_rows), abs(by_cols), np.finfo(float).tiny)
    return by_rows, by_cols, abs(by_rows - by_cols) / scale


# ---------------------------------------------------------------------------
# PEPO scalars


def pepo_compose(a: Pepo, b: Pepo) -> Pepo:
    """Exact ``a o b`` (``b`` acts first); bonds multiply."""
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise DimensionError("PEPO grids differ")
    return Pepo([[compose_site(x, y) for x, y in zip(ra, rb)] for ra, rb in zip(a.grid, b.grid)])


def _chi(cfg: BoundaryContractionConfig, default: int | None) -> int | None:
    return cfg.chi if cfg.chi is not None else default


def pepo_inner(a: Pepo, b: Pepo, cfg: BoundaryContractionConfig = BoundaryContractionConfig()) -> complex:
    """``Tr[a b^dag]``."""
    net = [[pair_site(x, y) for x, y in zip(ra, rb)] for ra, rb in zip(a.grid, b.grid)]
    return contract_network(net, cfg, cfg.chi)


def pepo_trace(a: Pepo, cfg: BoundaryContractionConfig = BoundaryContractionConfig()) -> complex:
    return contract_network(_rows_of(a.grid, trace_site), cfg, cfg.chi)


def relative_distance_pepo(a: Pepo, b: Pepo, cfg: BoundaryContractionConfig = BoundaryContractionConfig()) -> float:
    naa, nbb = pepo_inner(a, a, cfg).real, pepo_inner(b, b, cfg).real
    if naa <= 0.0 or nbb <= 0.0:
        raise ZeroDivisionError("relative distance of a zero-norm PEPO")
    nab = pepo_inner(a, b, cfg).real
    return float(max(naa + nbb - 2 * nab, 0.0) / np.sqrt(naa * nbb))


def distance_to_identity(w: Pepo, cfg: BoundaryContractionConfig = BoundaryContractionConfig()) -> float:
    """``D(w, 1)`` without building the identity's network separately."""
    q = pepo_inner(w, w, cfg).real
    t = pepo_trace(w, cfg).real
    c = 4.0**w.n_sites
    return float(max(q - 2 * t + c, 0.0) / np.sqrt(q * c))


def trace_infidelity_pepo(a: Pepo, cfg: BoundaryContractionConfig = BoundaryContractionConfig()) -> float:
    """``|<<1| - <<1| a|^2`` through three planar contractions."""
    row = _rows_of(a.grid, lambda t: np.einsum("t,udlrts->udlrs", _VEC_ID, t))
    ident = _VEC_ID.reshape(1, 1, 1, 1, 4)
    vv = contract_network([[pair_site(t, t) for t in r] for r in row], cfg, cfg.chi).real
    tv = contract_network([[pair_site(t, ident) for t in r] for r in row], cfg, cfg.chi).real
    tt = 2.0**a.n_sites
    return float(max(tt - 2 * tv + vv, 0.0))


# ---------------------------------------------------------------------------
# variational inverse


@dataclass
class PepoInverseReport(InverseReport):
    """:class:`InverseReport` plus the final contraction self-consistency gap."""

    chi: int | None = None
    consistency_gap: float = float("nan")
    local_increases: list[float] = field(default_factory=list)


class PepoInverseWorkspace:
    """Current guess, target and cached boundaries for one PEPO inverse."""

    def __init__(self, target: Pepo, guess: Pepo, cfg: BoundaryContractionConfig, chi: int | None, rcond: float):
        self.target = target.copy()
        self.sites = [[t.copy() for t in row] for row in guess.grid]
        self.cfg = cfg
        self.chi = chi
        self.rcond = rcond
        self.identity_norm = 4.0**target.n_sites
        self.last_error = float("nan")
        self.rotated = False

    def guess(self) -> Pepo:
        g = Pepo(self.sites)
        return g.rotated() if self.rotated else g

    def rotate(self) -> None:
        self.sites = Pepo(self.sites).rotated().grid
        self.target = self.target.rotated()
        self.rotated = not self.rotated

    def _nets(self, i: int, c: int) -> tuple[np.ndarray, np.ndarray]:
        w = compose_site(self.sites[i][c], self.target.grid[i][c])
        return pair_site(w, w), trace_site(w)

    def _site_system(self, env4: np.ndarray, env2: np.ndarray, i: int, c: int):
        b = self.sites[i][c]
        a = self.target.grid[i][c]
        bd, ad = b.shape[:4], a.shape[:4]
        xb, xa = int(np.prod(bd)), int(np.prod(ad))
        # every fused leg of env4 is (b, a, b-bar, a-bar); of env2 is (b, a)
        e4 = env4.reshape(sum(((bd[k], ad[k], bd[k], ad[k]) for k in range(4)), ()))
        e4 = e4.transpose([4 * k for k in range(4)] + [4 * k + 1 for k in range(4)]
                          + [4 * k + 2 for k in range(4)] + [4 * k + 3 for k in range(4)])
        e4 = e4.reshape(xb, xa, xb, xa)
        e2 = env2.reshape(sum(((bd[k], ad[k]) for k in range(4)), ()))
        e2 = e2.transpose([2 * k for k in range(4)] + [2 * k + 1 for k in range(4)]).reshape(xb, xa)
        am = a.reshape(xa, 4, 4)
        gram = np.einsum("akS,blS->akbl", am, am.conj())
        m = np.einsum("xAyB,AkBl->ylxk", e4, gram).reshape(xb * 4, xb * 4)
        m = (m + m.conj().T) / 2
        n = np.einsum("xA,Akt->xkt", e2, am).conj().reshape(xb * 4, 4)
        return m, n

    @staticmethod
    def _local_error(m, n, x, c_norm) -> float:
        quad = np.einsum("it,ij,jt->", x.conj(), m, x).real
        lin = np.einsum("it,it->", x.conj(), n).real
        return float(quad - 2 * lin + c_norm)

    def forward_pass(self, history: list[float], increases: list[float]) -> None:
        """Row-major pass over all sites of the current orientation."""
        rows, cols = len(self.sites), len(self.sites[0])
        lim = self.cfg.max_elements
        net4, net2 = [], []
        for i in range(rows):
            pairs = [self._nets(i, c) for c in range(cols)]
            net4.append([p[0] for p in pairs])
            net2.append([p[1] for p in pairs])
        bot4 = bottom_boundaries(net4, self.cfg, self.chi)
        bot2 = bottom_boundaries(net2, self.cfg, self.chi)
        top4, top2 = _trivial_boundary(cols), _trivial_boundary(cols)
        for i in range(rows):
            right4 = right_environments(top4, net4[i], bot4[i], lim)
            right2 = right_environments(top2, net2[i], bot2[i], lim)
            left4 = left2 = np.ones((1, 1, 1), dtype=complex)
            for c in range(cols):
                env4 = site_environment(left4, top4[c], bot4[i][c], right4[c], lim)
                env2 = site_environment(left2, top2[c], bot2[i][c], right2[c], lim)
                m, n = self._site_system(env4, env2, i, c)
                b = self.sites[i][c]
                sh = b.shape
                before = self._local_error(m, n, b.transpose(0, 1, 2, 3, 5, 4).reshape(-1, 4), self.identity_norm)
                x = solve_site(m, n, self.rcond)
                after = self._local_error(m, n, x, self.identity_norm)
                if after > before:
                    # approximate environments can make the exact local optimum look worse
                    increases.append((after - before) / self.identity_norm)
                self.sites[i][c] = x.reshape(sh[0], sh[1], sh[2], sh[3], 4, 4).transpose(0, 1, 2, 3, 5, 4)
                self.last_error = after
                history.append(after)
                net4[i][c], net2[i][c] = self._nets(i, c)
                left4 = _left_step(left4, top4[c], net4[i][c], bot4[i][c], lim)
                left2 = _left_step(left2, top2[c], net2[i][c], bot2[i][c], lim)
            if i + 1 < rows:
                top4 = absorb_row(top4, net4[i], self.cfg, self.chi)
                top2 = absorb_row(top2, net2[i], self.cfg, self.chi)

    def sweep(self, history: list[float], increases: list[float]) -> float:
        self.forward_pass(history, increases)
        self.rotate()
        self.forward_pass(history, increases)
        self.rotate()
        return self.last_error

    def norm_network(self) -> list[list[np.ndarray]]:
        w = pepo_compose(self.guess(), self.target if not self.rotated else self.target.rotated())
        return [[pair_site(t, t) for t in row] for row in w.grid]


def _cap_links(p: Pepo, bond: int, cutoff: float) -> Pepo:
    grid = [[t.copy() for t in row] for row in p.grid]
    rows, cols = len(grid), len(grid[0])
    for i in range(rows):
        for c in range(cols):
            if c + 1 < cols and grid[i][c].shape[3] > bond:
                grid[i][c], grid[i][c + 1] = _truncate_link(grid[i][c], grid[i][c + 1], 3, 2, bond, cutoff)
            if i + 1 < rows and grid[i][c].shape[1] > bond:
                grid[i][c], grid[i + 1][c] = _truncate_link(grid[i][c], grid[i + 1][c], 1, 0, bond, cutoff)
    return Pepo(grid)


def pepo_initial_guess(u: Pepo, bond: int, init: str = "dagger", seed: int = 0) -> Pepo:
    """``U^dag`` with every link capped at ``bond``, or random tensors on the same links."""
    start = _cap_links(u.dagger(), bond, DEFAULT_CUTOFF)
    if init == "dagger":
        return start
    if init == "random":
        rng = np.random.default_rng(seed)
        return Pepo([[rng.standard_normal(t.shape) + 1j * rng.standard_normal(t.shape) for t in row] for row in start.grid])
    raise ValueError(f"unknown init {init!r}")


def pepo_inverse(
    u: Pepo,
    bond: int,
    cfg: BoundaryContractionConfig = BoundaryContractionConfig(),
    max_sweeps: int = 15,
    tol: float = 1e-12,
    init: str = "dagger",
    seed: int = 0,
    rcond: float = 1e-12,
    check_consistency: bool = True,
) -> tuple[Pepo, PepoInverseReport]:
    """Fit ``U' ~ U^-1`` on a grid by single-site sweeps.

    Links of ``U'`` carry ``min(bond, link bond of U)``: a link that no gate of
    ``U`` crosses stays trivial in the inverse as well. Boundary MPSs default
    to ``chi = D**2`` with ``D`` the largest link of ``U' o U``, the operator
    whose norm network is contracted.

    Raises:
        BoundaryContractionError: If the final norm network contracts to
            different values row-wise and column-wise.
        ContractionTooLarge: If an intermediate exceeds ``cfg.max_elements``.
    """
    if bond < 1:
        raise ValueError("bond must be >= 1")
    guess = pepo_initial_guess(u, bond, init, seed)
    chi = _chi(cfg, pepo_compose(guess, u).max_bond ** 2)
    ws = PepoInverseWorkspace(u, guess, cfg, chi, rcond)
    history: list[float] = []
    increases: list[float] = []
    sweep_errors: list[float] = []
    traces: list[float] = []
    tcfg = dataclasses.replace(cfg, chi=chi)
    converged = False
    for _ in range(max_sweeps):
        sweep_errors.append(ws.sweep(history, increases))
        traces.append(trace_infidelity_pepo(ws.guess(), tcfg))
        if len(sweep_errors) > 1 and abs(sweep_errors[-1] - sweep_errors[-2]) / ws.identity_norm < tol:
            converged = True
            break
    gap = float("nan")
    if check_consistency:
        _, _, gap = contraction_consistency(ws.norm_network(), cfg, chi)
        if gap > cfg.consistency_tol:
            raise BoundaryContractionError(f"row/column contractions differ by {gap:.2%} at chi={chi}")
    report = PepoInverseReport(
        converged=converged,
        final_error=max(ws.last_error, 0.0),
        sweeps_used=len(sweep_errors),
        error_history=history,
        sweep_errors=sweep_errors,
        trace_infidelity_history=traces,
        identity_norm=ws.identity_norm,
        chi=chi,
        consistency_gap=gap,
        local_increases=increases,
    )
    return ws.guess(), report


__all__ = [
    "BoundaryContractionConfig",
    "BoundaryContractionError",
    "Circuit2DSpec",
    "ContractionTooLarge",
    "Pepo",
    "PepoInverseReport",
    "compile_dense_2d",
    "contract_network",
    "contraction_consistency",
    "distance_to_identity",
    "generate_test_circuit_2d",
    "identity_pepo",
    "pepo_compose",
    "pepo_from_circuit_2d",
    "pepo_inner",
    "pepo_inverse",
    "pair_site",
    "pepo_trace",
    "relative_distance_pepo",
    "trace_infidelity_pepo",
]
