"""Rotating-frame non-Hermitian Hamiltonians of the driven atoms-cavity system.

Everything is in units of the atom-cavity coupling ``g = 1``::

    H = delta a^dag a + Delta n_e + (S^- a^dag + S^+ a)
        - i kappa/2 a^dag a - i gamma/2 n_e - i gamma1/2 n_1 + i eta (a^dag - a)
        + Omega(t)/2 sum|1><0| + Omega*(t)/2 sum|0><1|
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .basis import (
    FOUR_LEVEL,
    FourLevelBasis,
    SymmetricBasis,
    collective_operator,
    number_operator,
    product_operator,
)
from .pulses import PulseProfile

__all__ = [
    "PhysicalParams",
    "TimeDependentOperator",
    "EffectiveModel",
    "build_full_hamiltonian",
    "build_four_level_hamiltonian",
    "build_effective_model",
    "build_effective_hamiltonian",
]

_AUTO = ("delta", "delta_gl")


@dataclass(frozen=True)
class PhysicalParams:
    """Model rates and detunings in units of ``g``.

    ``delta`` defaults to the blockade value ``2/Delta`` and ``delta_gl`` to the
    resonant qubit-drive detuning ``eta^2 Delta / 2``. Fields left to their
    defaults are recomputed by :meth:`updated` when their inputs change.
    """

    kappa: float
    gamma: float
    Delta: float
    eta: float = 0.0
    Omega0: float = 0.0
    N: int = 1
    delta: float | None = None
    delta_gl: float | None = None
    gamma1: float = 0.0
    g: float = 1.0
    auto: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.g != 1.0:
            raise ValueError("all quantities are expressed in units of g; g must be 1")
        for name in ("kappa", "gamma", "eta", "Omega0", "gamma1"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.N < 0:
            raise ValueError(f"N must be >= 0, got {self.N}")
        auto = set(self.auto)
        if self.delta is None:
            if self.Delta == 0:
                raise ValueError("Delta = 0: blockade detuning 2/Delta undefined; pass delta explicitly")
            object.__setattr__(self, "delta", 2.0 / self.Delta)
            auto.add("delta")
        if self.delta_gl is None:
            object.__setattr__(self, "delta_gl", self.eta ** 2 * self.Delta / 2)
            auto.add("delta_gl")
        object.__setattr__(self, "auto", tuple(sorted(auto)))

    @property
    def cooperativity(self) -> float:
        return math.inf if self.kappa * self.gamma == 0 else 1.0 / (self.kappa * self.gamma)

    def updated(self, **changes) -> "PhysicalParams":
        """Copy with ``changes``; defaulted detunings follow their inputs."""
        kw = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "auto"}
        for name in _AUTO:
            if name in self.auto and name not in changes:
                kw[name] = None
        kw.update(changes)
        return PhysicalParams(**kw)

    def lossless(self) -> "PhysicalParams":
        return replace(self, kappa=0.0, gamma=0.0, gamma1=0.0)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "auto"}


@dataclass(frozen=True, eq=False)
class TimeDependentOperator:
    """``H(t) = static + Omega(t) B/2 + Omega*(t) B^dag/2``.

    ``excitation`` is the diagonal of a number operator ``n`` with
    ``[n, B] = B``; when present the propagator moves to the frame that
    removes the drive phase, where the generator is
    ``static + Omega0/2 (B + B^dag) + theta'(t) n``.
    """

    static_part: sp.csr_matrix
    drive_part: sp.csr_matrix
    drive_conj_part: sp.csr_matrix
    pulse: PulseProfile | None = None
    excitation: np.ndarray | None = None
    labels: tuple | None = None

    @property
    def dim(self) -> int:
        return self.static_part.shape[0]

    @property
    def drive_law(self) -> Callable:
        if self.pulse is None:
            return lambda t: 0.0 * np.asarray(t)
        return self.pulse.omega

    def __call__(self, t: float) -> sp.csr_matrix:
        om = complex(self.drive_law(t))
        return (self.static_part + (0.5 * om) * self.drive_part
                + (0.5 * om.conjugate()) * self.drive_conj_part).tocsr()

    def dense(self, t: float) -> np.ndarray:
        return self(t).toarray()

    def anti_hermitian_spectrum(self, t: float) -> np.ndarray:
        """Eigenvalues of ``(H - H^dag)/2i``; all <= 0 means the norm cannot grow."""
        h = self.dense(t)
        return np.linalg.eigvalsh((h - h.conj().T) / 2j)

    def hermiticity_residual(self, t: float) -> float:
        h = self.dense(t)
        return float(np.linalg.norm(h - h.conj().T, 2) / 2)

    @property
    def static_frame(self) -> bool:
        """True when the phase-frame generator is time independent."""
        return self.pulse is None or (self.pulse.kind == "constant" or not self.drive_part.nnz)

    def with_pulse(self, pulse: PulseProfile) -> "TimeDependentOperator":
        return replace(self, pulse=pulse)


def _check_pulse(params: PhysicalParams, pulse: PulseProfile | None):
    if pulse is not None and not math.isclose(pulse.Omega0, params.Omega0, rel_tol=1e-12):
        raise ValueError(f"pulse Omega0 {pulse.Omega0} differs from params.Omega0 {params.Omega0}")


def build_full_hamiltonian(params: PhysicalParams, basis: SymmetricBasis,
                           pulse: PulseProfile | None = None) -> TimeDependentOperator:
    """Full model on the symmetric collective basis."""
    if basis.N != params.N:
        raise ValueError(f"basis built for N={basis.N} but params.N={params.N}")
    _check_pulse(params, pulse)
    photons = number_operator("photons", basis)
    n_e = number_operator("ne", basis)
    n_1 = number_operator("n1", basis)
    diag = ((params.delta - 0.5j * params.kappa) * photons
            + (params.Delta - 0.5j * params.gamma) * n_e
            - 0.5j * params.gamma1 * n_1)
    static = (sp.diags(diag).tocsr()
              + collective_operator("Sm_adag", basis) + collective_operator("Sp_a", basis)
              + 1j * params.eta * (collective_operator("adag", basis) - collective_operator("a", basis)))
    B = collective_operator("raise01", basis)
    return TimeDependentOperator(static.tocsr(), B, B.conj().T.tocsr(), pulse,
                                 excitation=n_1 + n_e, labels=basis.states)


def build_four_level_hamiltonian(params: PhysicalParams, basis: FourLevelBasis,
                                 pulse: PulseProfile | None = None) -> TimeDependentOperator:
    """Full model on the product basis of four-level atoms; ``|1'>`` is a spectator."""
    if basis.N not in (2, 3):
        raise ValueError(f"four-level model supports N in {{2, 3}}, got {basis.N}")
    if basis.N != params.N:
        raise ValueError(f"basis built for N={basis.N} but params.N={params.N}")
    _check_pulse(params, pulse)
    N, m = basis.N, basis.m_max

    def op(kind):
        return product_operator(kind, N, m, levels=FOUR_LEVEL)

    photons, n_e, n_1 = op("photons"), op("ne"), op("n1")
    static = ((params.delta - 0.5j * params.kappa) * photons
              + (params.Delta - 0.5j * params.gamma) * n_e
              - 0.5j * params.gamma1 * n_1
              + op("Sm_adag") + op("Sp_a")
              + 1j * params.eta * (op("adag") - op("a")))
    B = sp.csr_matrix(op("raise01").astype(complex))
    return TimeDependentOperator(sp.csr_matrix(static.astype(complex)), B, B.conj().T.tocsr(), pulse,
                                 excitation=np.real(np.diag(n_1 + n_e)).copy(), labels=basis.states)


@dataclass(frozen=True)
class EffectiveModel:
    """Energies and linewidths of the dressed two-level blockade model."""

    E0: float
    Gamma0: float
    E1: float
    N: int
    kappa: float
    gamma: float
    gamma1: float
    eta: float
    Delta: float
    Omega0: float

    def Gamma1_of_N0(self, n0: int) -> float:
        """Linewidth of the dressed single-excitation state with ``n0`` driven atoms."""
        if n0 < 1:
            raise ValueError("Gamma1 is defined for N0 >= 1")
        eta2, D2 = self.eta ** 2, self.Delta ** 2
        pump = 0.0 if n0 == 1 else (n0 - 1) * self.Omega0 ** 2 / eta2
        rate = eta2 * D2 * self.kappa + eta2 * self.gamma + pump * (self.kappa / 2 + self.gamma / D2)
        if self.gamma1:
            rate += (1 + eta2 * D2 + pump * (1 + 1 / D2)) * self.gamma1
        return rate

    @property
    def Gamma1(self) -> float:
        return self.Gamma1_of_N0(self.N)

    @staticmethod
    def coupling_root_N0(n0: int) -> float:
        """Ratio of the ``N0``-atom coupling to ``Omega/2``."""
        return math.sqrt(n0)

    def rabi_prime(self, n0: int | None = None) -> complex:
        """Damped Rabi frequency ``Omega0 sqrt(1 - (Gamma0 - Gamma1)^2 / (4 N0 Omega0^2))``."""
        n0 = self.N if n0 is None else n0
        d = self.Gamma0 - self.Gamma1_of_N0(n0)
        return self.Omega0 * np.sqrt(complex(1 - d * d / (4 * n0 * self.Omega0 ** 2)))


def build_effective_model(params: PhysicalParams) -> EffectiveModel:
    if params.Delta == 0:
        raise ValueError("effective model requires Delta != 0")
    if params.eta == 0 and params.Omega0 > 0:
        raise ValueError("effective model requires eta > 0 when Omega0 > 0")
    eta2 = params.eta ** 2
    return EffectiveModel(
        E0=-eta2 * params.Delta / 2,
        Gamma0=params.kappa * eta2 * params.Delta ** 2 / 4,
        E1=-eta2 * params.Delta,
        N=params.N, kappa=params.kappa, gamma=params.gamma, gamma1=params.gamma1,
        eta=params.eta, Delta=params.Delta, Omega0=params.Omega0,
    )


def build_effective_hamiltonian(model: EffectiveModel, N0: int, pulse: PulseProfile | None = None,
                                with_light_shifts: bool = False) -> TimeDependentOperator:
    """Two-level ``{|D0>, |D1>}`` blockade Hamiltonian for ``N0`` driven atoms.

    By default the diagonal holds only the decay terms, so a pulse without
    detuning is resonant. With ``with_light_shifts`` the energies ``E0``, ``E1``
    are included and the pulse needs ``delta_gl = E0 - E1`` for resonance, as
    in the full model. ``N0 = 0`` gives the one-dimensional pure-decay case.
    """
    if N0 < 0:
        raise ValueError("N0 must be >= 0")
    e0 = (model.E0 if with_light_shifts else 0.0) - 0.5j * model.Gamma0
    if N0 == 0:
        z = sp.csr_matrix((1, 1), dtype=complex)
        return TimeDependentOperator(sp.csr_matrix([[e0]], dtype=complex), z, z, pulse,
                                     excitation=np.zeros(1), labels=("D0",))
    e1 = (model.E1 if with_light_shifts else 0.0) - 0.5j * model.Gamma1_of_N0(N0)
    static = sp.csr_matrix(np.diag([e0, e1]).astype(complex))
    B = sp.csr_matrix(np.array([[0, 0], [math.sqrt(N0), 0]], dtype=complex))
    return TimeDependentOperator(static, B, B.conj().T.tocsr(), pulse,
                                 excitation=np.array([0.0, 1.0]), labels=("D0", "D1"))
