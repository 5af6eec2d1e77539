"""Permutation-symmetric collective basis for N three-level atoms and a cavity mode.

States are labelled ``(a, b, m)``: ``a`` atoms in ``|1>``, ``b`` atoms in ``|e>``,
the remaining ``N - a - b`` in ``|0>``, and ``m`` cavity photons. Every symmetrized
state carries positive real coefficients, so all collective matrix elements are
real and non-negative.

A brute-force tensor-product construction is provided alongside the symmetric
fast path; it is the reference every combinatorial factor is checked against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial, sqrt
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

__all__ = [
    "OPERATOR_KINDS",
    "SymmetricBasisState",
    "SymmetricBasis",
    "FourLevelBasis",
    "enumerate_symmetric_basis",
    "enumerate_four_level_basis",
    "collective_coupling_element",
    "collective_operator",
    "number_operator",
    "product_operator",
    "symmetrizer",
    "project_full_to_symmetric",
]

# S+a, S-a^dag, a, a^dag, sum |1><0|, sum |0><1|
OPERATOR_KINDS = ("Sp_a", "Sm_adag", "a", "adag", "raise01", "lower01")

# single-atom level ordering for product spaces
THREE_LEVEL = ("0", "1", "e")
FOUR_LEVEL = ("0", "1'", "1", "e")


class SymmetricBasisState(NamedTuple):
    a: int
    b: int
    m: int

    @property
    def n(self) -> int:
        """Atomic excitation number ``a + b`` (atoms out of ``|0>``)."""
        return self.a + self.b

    @property
    def k(self) -> int:
        """Number ``b + m`` conserved by the atom-cavity coupling."""
        return self.b + self.m


@dataclass(frozen=True)
class SymmetricBasis:
    N: int
    m_max: int
    n_max: int
    states: tuple[SymmetricBasisState, ...]
    index: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def ordinal(self, a: int, b: int, m: int) -> int:
        return self.index[(a, b, m)]

    def contains(self, a: int, b: int, m: int) -> bool:
        return (a, b, m) in self.index

    def diagonal(self, fn) -> np.ndarray:
        """Evaluate ``fn(state)`` on every basis state."""
        return np.array([fn(s) for s in self.states], dtype=float)

    @property
    def truncated(self) -> bool:
        return self.n_max < self.N

    def ket(self, a: int, b: int, m: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[(a, b, m)]] = 1.0
        return v


@dataclass(frozen=True)
class FourLevelBasis:
    """Product basis over per-atom labels ``{0, 1', 1, e}`` joined with photon number."""

    N: int
    m_max: int
    states: tuple[tuple[tuple[str, ...], int], ...]
    index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def ket(self, labels, m: int = 0) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[(tuple(labels), m)]] = 1.0
        return v


def enumerate_symmetric_basis(N: int, m_max: int, n_max: int | None = None) -> SymmetricBasis:
    """Enumerate ``(a, b, m)`` with ``a + b <= min(N, n_max)`` and ``m <= m_max``.

    Ordering is lexicographic in ``(a + b, b, m)`` so that the blocks of fixed
    excitation number are contiguous. ``n_max`` truncates the atomic excitation
    number; ``None`` keeps the full symmetric sector. ``N = 0`` (cavity only) is
    allowed.
    """
    if N < 0 or m_max < 0:
        raise ValueError(f"need N >= 0 and m_max >= 0, got N={N}, m_max={m_max}")
    n_top = N if n_max is None else min(N, n_max)
    if n_top < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    states = []
    for n in range(n_top + 1):
        for b in range(n + 1):
            for m in range(m_max + 1):
                states.append(SymmetricBasisState(n - b, b, m))
    index = {tuple(s): i for i, s in enumerate(states)}
    return SymmetricBasis(N=N, m_max=m_max, n_max=n_top, states=tuple(states), index=index)


def enumerate_four_level_basis(N: int, m_max: int) -> FourLevelBasis:
    if N not in (2, 3):
        raise ValueError(f"four-level gate basis supports N in {{2, 3}}, got {N}")
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    states = tuple(
        (labels, m)
        for labels in itertools.product(FOUR_LEVEL, repeat=N)
        for m in range(m_max + 1)
    )
    index = {s: i for i, s in enumerate(states)}
    return FourLevelBasis(N=N, m_max=m_max, states=states, index=index)


def collective_coupling_element(op_kind: str, state, N: int, m_max: int | None = None,
                                n_max: int | None = None):
    """Image and amplitude of a collective operator acting on a symmetric state.

    Returns ``(image, amplitude)``. The amplitude is zero when the operator
    annihilates the state or the image leaves the truncated space; the image is
    then the formal target (or the input state if none exists).
    """
    a, b, m = state
    c = N - a - b
    n_top = N if n_max is None else min(N, n_max)
    m_top = np.inf if m_max is None else m_max
    if op_kind == "Sp_a":
        # sum_j |e_j><1_j| times a
        img, amp = (a - 1, b + 1, m - 1), sqrt(a * (b + 1) * m) if a > 0 and m > 0 else 0.0
    elif op_kind == "Sm_adag":
        img, amp = (a + 1, b - 1, m + 1), sqrt(b * (a + 1) * (m + 1)) if b > 0 else 0.0
    elif op_kind == "a":
        img, amp = (a, b, m - 1), sqrt(m) if m > 0 else 0.0
    elif op_kind == "adag":
        img, amp = (a, b, m + 1), sqrt(m + 1)
    elif op_kind == "raise01":
        img, amp = (a + 1, b, m), sqrt(c * (a + 1)) if c > 0 else 0.0
    elif op_kind == "lower01":
        img, amp = (a - 1, b, m), sqrt((c + 1) * a) if a > 0 else 0.0
    else:
        raise ValueError(f"unknown operator kind {op_kind!r}; expected one of {OPERATOR_KINDS}")
    if amp and (img[2] > m_top or img[0] + img[1] > n_top):
        amp = 0.0
    if not amp:
        return SymmetricBasisState(*state), 0.0
    return SymmetricBasisState(*img), float(amp)


def collective_operator(op_kind: str, basis: SymmetricBasis) -> sp.csr_matrix:
    """Sparse matrix of a collective operator on ``basis``."""
    rows, cols, vals = [], [], []
    for j, s in enumerate(basis.states):
        img, amp = collective_coupling_element(op_kind, s, basis.N, basis.m_max, basis.n_max)
        if amp:
            rows.append(basis.index[tuple(img)])
            cols.append(j)
            vals.append(amp)
    return sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim), dtype=complex)


def number_operator(kind: str, basis: SymmetricBasis) -> np.ndarray:
    """Diagonal of ``n_1``, ``n_e``, ``n`` (= n_1 + n_e) or ``photons`` as a real vector."""
    pick = {
        "n1": lambda s: s.a,
        "ne": lambda s: s.b,
        "n": lambda s: s.a + s.b,
        "photons": lambda s: s.m,
    }
    if kind not in pick:
        raise ValueError(f"unknown number operator {kind!r}")
    return basis.diagonal(pick[kind])


# --- tensor-product reference -------------------------------------------------

def _site_op(levels, ket: str, bra: str) -> np.ndarray:
    d = len(levels)
    op = np.zeros((d, d))
    op[levels.index(ket), levels.index(bra)] = 1.0
    return op


def _embed(op: np.ndarray, site: int, N: int, d: int) -> np.ndarray:
    out = np.ones((1, 1))
    for j in range(N):
        out = np.kron(out, op if j == site else np.eye(d))
    return out


def _photon_ops(m_max: int):
    a = np.diag(np.sqrt(np.arange(1, m_max + 1)), k=1)
    return a, a.T.copy()


def product_operator(op_kind: str, N: int, m_max: int, levels=THREE_LEVEL) -> np.ndarray:
    """Dense operator on the full product space ``atoms^N (x) photons``.

    Built directly from single-site projectors and Kronecker products; this is
    the independent reference for the symmetric construction. Photon index is
    the last (fastest) tensor factor.
    """
    d = len(levels)
    a, adag = _photon_ops(m_max)
    eye_ph = np.eye(m_max + 1)
    dim_at = d ** N

    def atom_sum(ket, bra):
        if N == 0:
            return np.zeros((1, 1))
        return sum(_embed(_site_op(levels, ket, bra), j, N, d) for j in range(N))

    if op_kind == "Sp_a":
        return np.kron(atom_sum("e", "1"), a)
    if op_kind == "Sm_adag":
        return np.kron(atom_sum("1", "e"), adag)
    if op_kind == "a":
        return np.kron(np.eye(dim_at), a)
    if op_kind == "adag":
        return np.kron(np.eye(dim_at), adag)
    if op_kind == "raise01":
        return np.kron(atom_sum("1", "0"), eye_ph)
    if op_kind == "lower01":
        return np.kron(atom_sum("0", "1"), eye_ph)
    if op_kind in ("n1", "ne", "n1'"):
        label = {"n1": "1", "ne": "e", "n1'": "1'"}[op_kind]
        return np.kron(atom_sum(label, label), eye_ph)
    if op_kind == "photons":
        return np.kron(np.eye(dim_at), adag @ a)
    raise ValueError(f"unknown operator kind {op_kind!r}")


def _multinomial(N: int, a: int, b: int) -> int:
    return factorial(N) // (factorial(a) * factorial(b) * factorial(N - a - b))


def symmetrizer(basis: SymmetricBasis) -> np.ndarray:
    """Isometry ``V`` (full_dim x sym_dim) whose columns are the symmetrized states.

    Columns are normalized sums over all atom arrangements with ``a`` atoms in
    ``|1>`` and ``b`` in ``|e>``; ``V^dag V = 1``.
    """
    N, m_max = basis.N, basis.m_max
    d_ph = m_max + 1
    V = np.zeros((3 ** N * d_ph, basis.dim))
    weights = {}
    for labels in itertools.product(range(3), repeat=N):
        a = labels.count(1)
        b = labels.count(2)
        flat = 0
        for lab in labels:
            flat = flat * 3 + lab
        weights.setdefault((a, b), []).append(flat)
    for j, s in enumerate(basis.states):
        idx = weights[(s.a, s.b)]
        norm = 1.0 / sqrt(_multinomial(N, s.a, s.b))
        for flat in idx:
            V[flat * d_ph + s.m, j] = norm
    return V


def project_full_to_symmetric(full_state: np.ndarray, basis: SymmetricBasis,
                              levels=THREE_LEVEL) -> np.ndarray:
    """Overlaps of a product-space state with the normalized symmetrized states.

    ``levels`` may be the four-level alphabet; components with any atom in
    ``|1'>`` are dropped before projection.
    """
    full_state = np.asarray(full_state, dtype=complex)
    N, d_ph = basis.N, basis.m_max + 1
    if tuple(levels) == FOUR_LEVEL:
        if full_state.shape[0] != 4 ** N * d_ph:
            raise ValueError(
                f"dimension mismatch: got {full_state.shape[0]}, expected {4 ** N * d_ph}")
        keep = []
        to3 = {0: 0, 2: 1, 3: 2}
        for labels in itertools.product(range(4), repeat=N):
            if 1 in labels:
                continue
            flat4 = 0
            for lab in labels:
                flat4 = flat4 * 4 + lab
            keep.append((flat4, [to3[lab] for lab in labels]))
        reduced = np.zeros(3 ** N * d_ph, dtype=complex)
        for flat4, labs3 in keep:
            flat3 = 0
            for lab in labs3:
                flat3 = flat3 * 3 + lab
            reduced[flat3 * d_ph:(flat3 + 1) * d_ph] = full_state[flat4 * d_ph:(flat4 + 1) * d_ph]
        full_state = reduced
    elif full_state.shape[0] != 3 ** N * d_ph:
        raise ValueError(
            f"dimension mismatch: got {full_state.shape[0]}, expected {3 ** N * d_ph}")
    return symmetrizer(basis).T @ full_state
