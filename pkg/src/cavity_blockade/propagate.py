"""Conditional (non-Hermitian) Schrödinger evolution and derived observables.

Propagation happens in the frame ``psi' = exp(-i theta(t) n) psi`` that removes
the qubit-drive phase ``theta(t) = phi(t Omega0) + delta_gl t``. There the
generator is ``A(t) = S + Omega0/2 (B + B^dag) + theta'(t) n`` and

* for constant-phase pulses ``A`` is static, so every sample interval is one
  exact exponential;
* otherwise a fourth-order commutator-free Magnus scheme (two exponentials per
  step) is used, doubling the step count until two successive resolutions
  agree to ``tol``.

Each constant-generator interval is handled through an eigendecomposition of
``A``, which also yields the exact time integrals of all basis populations
over the interval. Populations are diagonal in the basis and therefore
frame-independent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .basis import SymmetricBasis, SymmetricBasisState
from .hamiltonian import PhysicalParams, TimeDependentOperator

log = logging.getLogger(__name__)

__all__ = [
    "IntegrationError",
    "Trajectory",
    "TauTable",
    "ErrorBudget",
    "evolve",
    "dwell_times",
    "error_budget",
    "check_truncation",
    "TRUNCATION_THRESHOLD",
]

TRUNCATION_THRESHOLD = 1e-8

_S3 = math.sqrt(3.0)
_A1, _A2 = (3 - 2 * _S3) / 12, (3 + 2 * _S3) / 12
_C1, _C2 = 0.5 - _S3 / 6, 0.5 + _S3 / 6
_COND_LIMIT = 1e9


class IntegrationError(RuntimeError):
    """Numerical failure during propagation; ``t`` is the time of failure if known."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t = {t:.6g})")
        self.t = t


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled result of :func:`evolve`.

    ``norms`` holds ``||psi(t)||``. ``integrals`` holds exact time integrals of
    the named observables over ``[0, T]``; ``pop_integrals`` the integrals of
    every basis-state population.
    """

    times: np.ndarray
    norms: np.ndarray
    observables: dict
    populations: np.ndarray
    integrals: dict
    pop_integrals: np.ndarray
    final_state: np.ndarray
    steps: int
    method: str
    error_estimate: float = 0.0
    labels: tuple | None = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.times[-1])


class TauTable(dict):
    """Map from state label to dimensionless dwell time ``Omega0 * int |<q|psi>|^2 dt``."""

    def require(self, *names):
        missing = [n for n in names if n not in self]
        if missing:
            raise KeyError(f"dwell times missing for {missing}")
        return [self[n] for n in names]


class ErrorBudget(tuple):
    """``(gamma_loss, kappa_loss, residual)``; ``gamma1_loss`` is kept as an attribute."""

    def __new__(cls, gamma_loss, kappa_loss, residual, gamma1_loss=0.0):
        obj = super().__new__(cls, (float(gamma_loss), float(kappa_loss), float(residual)))
        obj.gamma1_loss = float(gamma1_loss)
        return obj

    gamma_loss = property(lambda self: self[0])
    kappa_loss = property(lambda self: self[1])
    residual = property(lambda self: self[2])

    @property
    def total(self) -> float:
        return self[0] + self[1] + self[2] + self.gamma1_loss


# --- named diagonal observables -------------------------------------------------

def _diagonal_observables(labels) -> dict:
    if not labels:
        return {}
    first = labels[0]
    if isinstance(first, SymmetricBasisState):
        arr = np.array(labels, dtype=float)
        return {"n1": arr[:, 0], "ne": arr[:, 1], "photons": arr[:, 2]}
    if isinstance(first, tuple) and len(first) == 2 and isinstance(first[0], tuple):
        return {
            "n1": np.array([lab.count("1") for lab, _ in labels], dtype=float),
            "ne": np.array([lab.count("e") for lab, _ in labels], dtype=float),
            "n1'": np.array([lab.count("1'") for lab, _ in labels], dtype=float),
            "photons": np.array([m for _, m in labels], dtype=float),
        }
    return {}


# --- constant-generator interval --------------------------------------------------

class _Interval:
    """Exact propagation of ``i d psi/dt = A psi`` over a fixed length ``h``."""

    def __init__(self, A: np.ndarray, h: float, projectors: np.ndarray | None):
        self.h = h
        self.proj = projectors
        lam, V = la.eig(A)
        cond = np.linalg.cond(V) if np.all(np.isfinite(V)) else np.inf
        self.exact_eig = cond < _COND_LIMIT
        if self.exact_eig:
            self.V = V
            self.Vinv = la.inv(V)
            self.phase = np.exp(-1j * lam * h)
            z = -1j * (lam[:, None] - lam[None, :].conj()) * h
            small = np.abs(z) < 1e-8
            zs = np.where(small, 1.0, z)
            self.E = h * np.where(small, 1 + z / 2, np.expm1(zs) / zs)
            self.U = (V * self.phase) @ self.Vinv
            self.PV = None if projectors is None else projectors.conj() @ V
        else:
            d = A.shape[0]
            self.L = -1j * A
            self.U = la.expm(self.L * h)
            self.d = d

    def step(self, psi: np.ndarray):
        """Return ``(psi(h), integral of |psi_i|^2, integral of |<q|psi>|^2)``."""
        if self.exact_eig:
            c = self.Vinv @ psi
            W = self.V * c
            pops = np.einsum("ij,ij->i", W @ self.E, W.conj()).real
            if self.PV is None:
                extra = None
            else:
                Q = self.PV * c
                extra = np.einsum("ij,ij->i", Q @ self.E, Q.conj()).real
            return (self.V @ (self.phase * c)), pops, extra
        d = self.d
        rho = np.outer(psi, psi.conj())
        M = np.zeros((2 * d, 2 * d), dtype=complex)
        M[:d, :d] = self.L
        M[:d, d:] = rho
        M[d:, d:] = -self.L.conj().T
        F = la.expm(M * self.h)
        P = F[:d, d:] @ self.U.conj().T
        pops = np.real(np.diag(P))
        extra = None
        if self.proj is not None:
            extra = np.real(np.einsum("qi,ij,qj->q", self.proj.conj(), P, self.proj))
        return self.U @ psi, pops, extra


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def _frame_parts(H: TimeDependentOperator):
    S = _dense(H.static_part).astype(complex)
    if H.pulse is None or H.drive_part.nnz == 0:
        return S, None, None
    if H.excitation is None:
        raise ValueError("operator has no excitation generator for the phase frame")
    drive = 0.5 * H.pulse.Omega0 * (_dense(H.drive_part) + _dense(H.drive_conj_part))
    return S + drive, np.asarray(H.excitation, dtype=float), H.pulse


def _check_finite(psi, t):
    if not np.all(np.isfinite(psi)):
        raise IntegrationError("non-finite amplitudes", t)


def _run_static(A0, nvec, rate, psi, T, n_samples, proj):
    A = A0 if nvec is None else A0 + rate * np.diag(nvec)
    h = T / n_samples
    iv = _Interval(A, h, proj)
    d = psi.size
    states = np.empty((n_samples + 1, d), dtype=complex)
    states[0] = psi
    pop_int = np.zeros(d)
    extra_int = None if proj is None else np.zeros(proj.shape[0])
    for k in range(n_samples):
        psi, pops, extra = iv.step(psi)
        _check_finite(psi, (k + 1) * h)
        states[k + 1] = psi
        pop_int += pops
        if extra is not None:
            extra_int += extra
    return states, pop_int, extra_int


def _cfm4_rates(pulse, T, M):
    h = T / M
    t0 = np.arange(M) * h
    f1 = pulse.total_phase_rate(t0 + _C1 * h)
    f2 = pulse.total_phase_rate(t0 + _C2 * h)
    return h, 2 * (_A2 * f1 + _A1 * f2), 2 * (_A1 * f1 + _A2 * f2)


def _cfm4_final(A0, nvec, pulse, psi, T, M):
    """Propagation only; used for the step-doubling accuracy control."""
    h, fa, fb = _cfm4_rates(pulse, T, M)
    A = -0.5j * h * A0
    dn = -0.5j * h * nvec
    for k in range(M):
        for f in (fa[k], fb[k]):
            psi = la.expm(A + np.diag(f * dn)) @ psi
        if not np.all(np.isfinite(psi)):
            raise IntegrationError("non-finite amplitudes", (k + 1) * h)
    return psi


def _run_cfm4(A0, nvec, pulse, psi, T, M, n_samples, proj):
    h, fa, fb = _cfm4_rates(pulse, T, M)
    stride = M // n_samples
    d = psi.size
    states = np.empty((n_samples + 1, d), dtype=complex)
    states[0] = psi
    pop_int = np.zeros(d)
    extra_int = None if proj is None else np.zeros(proj.shape[0])
    ndiag = np.diag(nvec)
    for k in range(M):
        for f in (fa[k], fb[k]):
            psi, pops, extra = _Interval(A0 + f * ndiag, h / 2, proj).step(psi)
            pop_int += pops
            if extra is not None:
                extra_int += extra
        _check_finite(psi, (k + 1) * h)
        if (k + 1) % stride == 0:
            states[(k + 1) // stride] = psi
    return states, pop_int, extra_int


def evolve(H: TimeDependentOperator, psi0, T: float, tol: float = 1e-10, n_samples: int = 1000,
           projectors: dict | None = None, max_doublings: int = 14) -> Trajectory:
    """Integrate ``i d psi/dt = H(t) psi`` from 0 to ``T``.

    ``projectors`` maps names to state vectors ``q``; their overlaps
    ``|<q|psi(t)>|^2`` are sampled and integrated exactly. Vectors must have a
    definite excitation number (true for every basis state) for the
    phase-frame values to equal the lab-frame ones.
    """
    if not (1e-14 < tol < 1e-4):
        raise ValueError(f"tol must lie in (1e-14, 1e-4), got {tol}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (H.dim,):
        raise ValueError(f"psi0 has shape {psi0.shape}, expected ({H.dim},)")
    names = list(projectors or {})
    proj = None
    if names:
        proj = np.array([np.asarray(projectors[n], dtype=complex) for n in names])
        proj = proj / np.linalg.norm(proj, axis=1, keepdims=True)

    A0, nvec, pulse = _frame_parts(H)
    theta0 = 0.0 if pulse is None else float(pulse.total_phase(0.0))
    psi = psi0 if nvec is None else np.exp(-1j * theta0 * nvec) * psi0

    if pulse is None or pulse.kind == "constant":
        rate = 0.0 if pulse is None else pulse.delta_gl
        states, pop_int, extra_int = _run_static(A0, nvec, rate, psi, T, n_samples, proj)
        steps, method, err = n_samples, "exact-exponential", 0.0
    else:
        # accept the coarsest resolution whose final state agrees with the
        # step-halved run to tol, then sample and integrate at that resolution
        M = n_samples
        prev = _cfm4_final(A0, nvec, pulse, psi, T, M)
        for _ in range(max_doublings):
            cur = _cfm4_final(A0, nvec, pulse, psi, T, 2 * M)
            err = float(np.linalg.norm(cur - prev))
            if err < tol:
                break
            M, prev = 2 * M, cur
        else:
            raise IntegrationError(
                f"step size underflow: {2 * M} steps do not reach tol={tol} (discrepancy {err:.2e})",
                t=T)
        states, pop_int, extra_int = _run_cfm4(A0, nvec, pulse, psi, T, M, n_samples, proj)
        steps, method = M, "cfm4"

    times = np.linspace(0.0, T, n_samples + 1)
    if nvec is not None:
        theta_T = pulse.total_phase(times)[:, None]
        lab = np.exp(1j * theta_T * nvec[None, :]) * states
    else:
        lab = states
    pops = np.abs(states) ** 2
    observables = {}
    integrals = {}
    for name, diag in _diagonal_observables(H.labels).items():
        observables[name] = pops @ diag
        integrals[name] = float(pop_int @ diag)
    if proj is not None:
        ov = np.abs(states @ proj.conj().T) ** 2
        for j, name in enumerate(names):
            observables[name] = ov[:, j]
            integrals[name] = float(extra_int[j])
    return Trajectory(times=times, norms=np.sqrt(pops.sum(axis=1)), observables=observables,
                      populations=pops, integrals=integrals, pop_integrals=pop_int,
                      final_state=lab[-1], steps=steps, method=method, error_estimate=err,
                      labels=H.labels)


def dwell_times(H_lossless: TimeDependentOperator, psi0, labels: dict, T: float, Omega0: float,
                tol: float = 1e-10, n_samples: int = 1000) -> TauTable:
    """``tau_q = Omega0 int_0^T |<q|psi(t)>|^2 dt`` for each labelled vector ``q``."""
    t_probe = np.linspace(0, T, 5)
    for t in t_probe:
        if H_lossless.hermiticity_residual(t) > 1e-12:
            raise ValueError("dwell times require a lossless (Hermitian) Hamiltonian")
    traj = evolve(H_lossless, psi0, T, tol=tol, n_samples=n_samples, projectors=labels)
    return TauTable({name: Omega0 * traj.integrals[name] for name in labels})


def error_budget(traj: Trajectory, params: PhysicalParams, residual: float = 0.0) -> ErrorBudget:
    """Loss integrals ``gamma int <n_e>``, ``kappa int <a^dag a>`` and the supplied residual.

    ``residual`` is the finite-time error of a companion lossless run.
    """
    missing = [k for k in ("ne", "photons") if k not in traj.integrals]
    if missing:
        raise KeyError(f"trajectory lacks observables {missing}")
    g1 = params.gamma1 * traj.integrals.get("n1", 0.0)
    return ErrorBudget(params.gamma * traj.integrals["ne"], params.kappa * traj.integrals["photons"],
                       residual, gamma1_loss=g1)


def check_truncation(traj: Trajectory, basis: SymmetricBasis, layer: str = "photon") -> float:
    """Peak population in the outermost retained photon (or atomic) layer."""
    if layer == "photon":
        mask = np.array([s.m == basis.m_max for s in basis.states])
    elif layer == "atomic":
        if not basis.truncated:
            return 0.0
        mask = np.array([s.n == basis.n_max for s in basis.states])
    else:
        raise ValueError(f"layer must be 'photon' or 'atomic', got {layer!r}")
    if traj.populations.shape[1] != basis.dim:
        raise ValueError("trajectory and basis dimensions differ")
    return float(traj.populations[:, mask].sum(axis=1).max())
