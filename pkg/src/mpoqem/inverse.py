"""Variational inverse of an MPO superoperator.

An MPO ``U'`` of fixed bond dimension is fitted to ``U^-1`` by minimising
``e = ||U'U - 1||_F^2`` one site at a time. With all other sites fixed the cost
is quadratic in the site tensor ``B_j``::

    e = sum_tau (b_tau^H M b_tau - b_tau^H N_tau - N_tau^H b_tau) + Tr[1]

where ``b_tau`` is the slice of ``B_j`` at output index ``tau``. The optimum
solves ``M b_tau = N_tau``. ``M`` does not depend on ``tau`` because the output
leg of ``U'`` is traced identically on both copies of ``U'U``.

The unknown MPO is kept in mixed-canonical form centred on the site being
updated, and left/right environments are cached so a full back-and-forth sweep
costs ``O(n)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mpo import Mpo, trace_infidelity_mpo, truncate

log = logging.getLogger(__name__)


@dataclass
class InverseReport:
    """Outcome of :func:`mpo_inverse`.

    Errors are the raw ``e = ||U'U - 1||_F^2``; ``identity_norm`` is
    ``Tr[1] = 4**n`` so ``normalized_history`` is ``e / Tr[1]``.
    """

    converged: bool
    final_error: float
    sweeps_used: int
    error_history: list[float] = field(default_factory=list)
    sweep_errors: list[float] = field(default_factory=list)
    trace_infidelity_history: list[float] = field(default_factory=list)
    identity_norm: float = 1.0

    @property
    def normalized_history(self) -> list[float]:
        return [e / self.identity_norm for e in self.error_history]

    @property
    def normalized_final_error(self) -> float:
        return self.final_error / self.identity_norm

    def max_increase(self) -> float:
        """Largest normalized increase of ``e`` over a single site update."""
        h = np.asarray(self.normalized_history)
        return float(np.max(np.diff(h), initial=0.0)) if h.size > 1 else 0.0


def solve_site(m: np.ndarray, n: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """Minimum-norm solution of ``M x = N`` for Hermitian PSD ``M``.

    Eigenvalues below ``rcond * lambda_max`` (and all negative ones) are treated
    as zero. ``n`` may hold several right-hand sides as columns.
    """
    herm = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(herm)
    top = w[-1] if w.size else 0.0
    if top <= 0.0:
        return np.zeros_like(n)
    keep = w > rcond * top
    vk = v[:, keep]
    return vk @ ((vk.conj().T @ n) / w[keep].reshape((-1,) + (1,) * (n.ndim - 1)))


def _pad_bonds(m: Mpo, bond_dim: int, rng: np.random.Generator, scale: float) -> Mpo:
    n = m.n_sites
    tensors = [t.copy() for t in m.tensors]
    for j in range(n - 1):
        cap = min(bond_dim, 16 ** (j + 1), 16 ** (n - j - 1))
        cur = tensors[j].shape[1]
        if cur >= cap:
            continue
        extra = cap - cur
        a, b = tensors[j], tensors[j + 1]
        na = scale * (rng.standard_normal(a.shape[:1] + (extra,) + a.shape[2:]) + 0j)
        nb = scale * (rng.standard_normal((extra,) + b.shape[1:]) + 0j)
        tensors[j] = np.concatenate([a, na], axis=1)
        tensors[j + 1] = np.concatenate([b, nb], axis=0)
    return Mpo(tensors)


class InverseWorkspace:
    """Environments and the current guess for one variational inverse."""

    def __init__(self, target: Mpo, guess: Mpo, rcond: float = 1e-12):
        if target.n_sites != guess.n_sites:
            raise ValueError("target and guess have different site counts")
        self.target = target
        self.n = target.n_sites
        self.rcond = rcond
        self.identity_norm = float(np.prod([t.shape[3] for t in target.tensors]))
        chain = guess.canonicalize(0)
        self.sites = [t.copy() for t in chain.tensors]
        # target site with its conjugate traced over the input leg: (a, b, k, ab, bb, kb)
        self._gram = [np.einsum("abks,cdls->abkcdl", t, t.conj()) for t in target.tensors]
        one4 = np.ones((1, 1, 1, 1), dtype=complex)
        one2 = np.ones((1, 1), dtype=complex)
        self.left4 = [one4] + [None] * (self.n - 1)
        self.left2 = [one2] + [None] * (self.n - 1)
        self.right4 = [None] * (self.n - 1) + [one4]
        self.right2 = [None] * (self.n - 1) + [one2]
        for j in range(self.n - 1, 0, -1):
            self._update_right(j)
        self.last_error = float("nan")
        self.iteration_count = 0

    # environment maintenance
    def _update_left(self, j: int) -> None:
        b = self.sites[j]
        t = np.tensordot(self.left4[j], b, axes=(0, 0))  # x y z B t k
        t = np.tensordot(t, b.conj(), axes=([2, 4], [0, 2]))  # x y B k Z l
        t = np.tensordot(t, self._gram[j], axes=([0, 3, 1, 5], [0, 2, 3, 5]))  # B Z X Y
        self.left4[j + 1] = t.transpose(0, 2, 3, 1)
        self.left2[j + 1] = np.einsum(
            "wx,wBtk,xXkt->BX", self.left2[j], b, self.target.tensors[j], optimize=True
        )

    def _update_right(self, j: int) -> None:
        b = self.sites[j]
        t = np.tensordot(self.right4[j], b, axes=(0, 1))  # X Y Z w t k
        t = np.tensordot(t, b.conj(), axes=([2, 4], [1, 2]))  # X Y w k z l
        t = np.tensordot(t, self._gram[j], axes=([0, 3, 1, 5], [1, 2, 4, 5]))  # w z x y
        self.right4[j - 1] = t.transpose(0, 2, 3, 1)
        self.right2[j - 1] = np.einsum(
            "BX,wBtk,xXkt->wx", self.right2[j], b, self.target.tensors[j], optimize=True
        )

    def build_environment_M(self, site: int) -> np.ndarray:
        """Quadratic-form matrix over the flattened ``(left, right, in)`` indices of ``B_site``.

        Rows belong to the conjugated copy.
        """
        t = np.tensordot(self.left4[site], self._gram[site], axes=([1, 2], [0, 3]))  # w z X k Y l
        t = np.tensordot(t, self.right4[site], axes=([2, 4], [1, 2]))  # w z k l B Z
        m = t.transpose(1, 5, 3, 0, 4, 2)
        dl, dr, dk = m.shape[:3]
        return m.reshape(dl * dr * dk, dl * dr * dk)

    def build_environment_N(self, site: int) -> np.ndarray:
        """Linear-term vectors, one column per output index ``tau``."""
        n = np.einsum(
            "wx,BX,xXkt->wBkt", self.left2[site], self.right2[site], self.target.tensors[site], optimize=True
        )
        dl, dr, dk, dt = n.shape
        return n.conj().reshape(dl * dr * dk, dt)

    def local_error(self, site: int, x: np.ndarray | None = None) -> float:
        m = self.build_environment_M(site)
        nvec = self.build_environment_N(site)
        if x is None:
            x = self._flatten(self.sites[site])
        quad = np.einsum("it,ij,jt->", x.conj(), m, x).real
        lin = np.einsum("it,it->", x.conj(), nvec).real
        return float(quad - 2 * lin + self.identity_norm)

    @staticmethod
    def _flatten(b: np.ndarray) -> np.ndarray:
        dl, dr, dt, dk = b.shape
        return b.transpose(0, 1, 3, 2).reshape(dl * dr * dk, dt)

    def update_site(self, site: int) -> float:
        """Solve the local linear system in place and return the new ``e``."""
        m = self.build_environment_M(site)
        nvec = self.build_environment_N(site)
        x = solve_site(m, nvec, self.rcond)
        dl, dr, dt, dk = self.sites[site].shape
        self.sites[site] = x.reshape(dl, dr, dk, dt).transpose(0, 1, 3, 2)
        quad = np.einsum("it,ij,jt->", x.conj(), m, x).real
        lin = np.einsum("it,it->", x.conj(), nvec).real
        self.last_error = float(quad - 2 * lin + self.identity_norm)
        return self.last_error

    def _move_right(self, j: int) -> None:
        b = self.sites[j]
        dl, dr, dt, dk = b.shape
        q, r = np.linalg.qr(b.transpose(0, 2, 3, 1).reshape(dl * dt * dk, dr))
        k = q.shape[1]
        self.sites[j] = q.reshape(dl, dt, dk, k).transpose(0, 3, 1, 2)
        self.sites[j + 1] = np.tensordot(r, self.sites[j + 1], axes=(1, 0))
        self._update_left(j)

    def _move_left(self, j: int) -> None:
        b = self.sites[j]
        dl, dr, dt, dk = b.shape
        q, r = np.linalg.qr(b.reshape(dl, dr * dt * dk).T)
        k = q.shape[1]
        self.sites[j] = q.T.reshape(k, dr, dt, dk)
        self.sites[j - 1] = np.tensordot(self.sites[j - 1], r.T, axes=(1, 0)).transpose(0, 3, 1, 2)
        self._update_right(j)

    def sweep(self, history: list[float]) -> float:
        """One back-and-forth pass; appends ``e`` after every site update."""
        if self.n == 1:
            history.append(self.update_site(0))
            self.iteration_count += 1
            return self.last_error
        for j in range(self.n - 1):
            history.append(self.update_site(j))
            self._move_right(j)
        for j in range(self.n - 1, 0, -1):
            history.append(self.update_site(j))
            self._move_left(j)
        self.iteration_count += 1
        return self.last_error

    def guess(self) -> Mpo:
        return Mpo([t.copy() for t in self.sites])


def initial_guess(u: Mpo, bond_dim: int, init: str = "dagger", seed: int = 0, pad_scale: float = 1e-6) -> Mpo:
    """Starting point for the sweeps.

    ``"dagger"`` truncates ``U^dag`` to ``bond_dim`` and pads bonds up to
    ``bond_dim`` with small random entries so the full variational class is
    reachable. ``"random"`` draws every site at random.
    """
    rng = np.random.default_rng(seed)
    if init == "dagger":
        start, _ = truncate(u.dagger(), bond_dim)
        return _pad_bonds(start, bond_dim, rng, pad_scale)
    if init == "random":
        n = u.n_sites
        bonds = [1] + [min(bond_dim, 16 ** (j + 1), 16 ** (n - j - 1)) for j in range(n - 1)] + [1]
        return Mpo(
            [
                rng.standard_normal((bonds[j], bonds[j + 1], 4, 4)) + 1j * rng.standard_normal((bonds[j], bonds[j + 1], 4, 4))
                for j in range(n)
            ]
        )
    raise ValueError(f"unknown init {init!r}")


def mpo_inverse(
    u: Mpo,
    bond_dim: int,
    max_sweeps: int = 30,
    tol: float = 1e-15,
    init: str = "dagger",
    seed: int = 0,
    rcond: float = 1e-12,
    track_trace: bool = False,
) -> tuple[Mpo, InverseReport]:
    """Fit ``U' ~ U^-1`` with bond dimension ``bond_dim`` by alternating least squares.

    Convergence is declared when ``e / Tr[1]`` changes by less than ``tol``
    between consecutive sweeps. Running out of sweeps is not an error; the report
    then has ``converged=False`` and the last iterate is returned.
    """
    if bond_dim < 1:
        raise ValueError("bond_dim must be >= 1")
    ws = InverseWorkspace(u, initial_guess(u, bond_dim, init, seed), rcond)
    history: list[float] = []
    sweep_errors: list[float] = []
    traces: list[float] = []
    converged = False
    for _ in range(max_sweeps):
        err = ws.sweep(history)
        sweep_errors.append(err)
        if track_trace:
            traces.append(trace_infidelity_mpo(ws.guess()))
        if len(sweep_errors) > 1 and abs(sweep_errors[-1] - sweep_errors[-2]) / ws.identity_norm < tol:
            converged = True
            break
    log.debug("mpo_inverse: %d sweeps, e/Tr1=%.3e", ws.iteration_count, ws.last_error / ws.identity_norm)
    report = InverseReport(
        converged=converged,
        final_error=max(ws.last_error, 0.0),
        sweeps_used=ws.iteration_count,
        error_history=history,
        sweep_errors=sweep_errors,
        trace_infidelity_history=traces,
        identity_norm=ws.identity_norm,
    )
    return ws.guess(), report
