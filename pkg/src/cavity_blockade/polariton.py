"""Closed-form spectral analysis of the polariton blockade.

Polariton energies, the blockade detuning, the dressed ``n = 2`` eigenvalues,
perturbative light shifts, and the first-order error laws with their optimal
operating points. All quantities are in units of ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .hamiltonian import PhysicalParams

__all__ = [
    "PolaritonSpectrum",
    "BlockadeDiagnostics",
    "PerturbativeShifts",
    "Regime",
    "GATE_TAU_LABELS",
    "QUOTED_GATE_PREFACTORS",
    "blockade_detuning",
    "polariton_spectrum",
    "dressed_matrix",
    "dressed_eigenvalues",
    "perturbative_shifts",
    "w_error_expression",
    "w_prefactor",
    "analytic_infidelity",
    "optimal_w_parameters",
    "optimal_w_ratio",
    "gate_coefficients",
    "gate_error_expression",
    "optimal_gate_parameters",
    "optimal_gate_ratio",
    "optimal_gate_prefactor",
]


@dataclass(frozen=True)
class PolaritonSpectrum:
    n: int
    eps_plus: complex
    eps_minus: complex | None
    mixing_cos: float


class Regime(str, Enum):
    DETUNING_DOMINATED = "detuning_dominated"
    DECAY_DOMINATED = "decay_dominated"


@dataclass(frozen=True)
class BlockadeDiagnostics:
    eta_eff: float
    gamma_eff: float
    lambda_plus: complex
    lambda_minus: complex
    regime: Regime


@dataclass(frozen=True)
class PerturbativeShifts:
    dE0: complex
    dE1: complex
    dE1_prime: complex


def blockade_detuning(Delta: float) -> float:
    """Cavity-drive detuning ``2/Delta`` that places the two-excitation polariton at zero."""
    if Delta == 0:
        raise ValueError("blockade detuning undefined for Delta = 0")
    return 2.0 / Delta


def polariton_spectrum(n: int, Delta: float, delta: float) -> PolaritonSpectrum:
    """Eigen-energies of the ``(n, k=1)`` block spanned by ``|n,0;1>`` and ``|n-1,1;0>``.

    For ``n = 0`` only the one-photon state exists and ``eps_plus = delta``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return PolaritonSpectrum(0, complex(delta), None, 1.0)
    split = np.sqrt(complex((delta - Delta) ** 2 + 4 * n))
    mean = 0.5 * (delta + Delta)
    cos = float(np.real((delta - Delta) / split))
    return PolaritonSpectrum(n, mean + 0.5 * split, mean - 0.5 * split, cos)


def dressed_matrix(params: PhysicalParams) -> np.ndarray:
    """Cavity-drive coupling between ``|2,0;0>`` and the polariton ``|p_2^->`` at blockade."""
    D = params.Delta
    norm = math.sqrt(D * D + 2)
    c = 1j * params.eta * D / norm
    loss = -0.5j * (params.kappa * D * D + 2 * params.gamma) / (D * D + 2)
    return np.array([[0, c], [np.conj(c), loss]], dtype=complex)


def dressed_eigenvalues(params: PhysicalParams) -> BlockadeDiagnostics:
    """``lambda_pm = +-sqrt(eta_eff^2 - gamma_eff^2/16) - i gamma_eff/4``.

    ``eta_eff = eta / sqrt(1 + 2/Delta^2)`` and
    ``gamma_eff = (kappa Delta^2 + 2 gamma) / (Delta^2 + 2)`` are the coupling
    and the linewidth of :func:`dressed_matrix`, so ``lambda_pm`` are its
    eigenvalues.
    """
    D = params.Delta
    if D == 0:
        raise ValueError("Delta must be nonzero")
    eta_eff = params.eta / math.sqrt(1 + 2 / D ** 2)
    gamma_eff = (params.kappa * D * D + 2 * params.gamma) / (D * D + 2)
    root = np.sqrt(complex(eta_eff ** 2 - gamma_eff ** 2 / 16))
    regime = Regime.DETUNING_DOMINATED if eta_eff >= gamma_eff / 4 else Regime.DECAY_DOMINATED
    return BlockadeDiagnostics(eta_eff, gamma_eff, root - 0.25j * gamma_eff,
                               -root - 0.25j * gamma_eff, regime)


def perturbative_shifts(params: PhysicalParams) -> PerturbativeShifts:
    """Light shifts of ``|0,0;0>`` and ``|1,0;0>`` to first order in the losses."""
    d, D, eta2 = params.delta, params.Delta, params.eta ** 2
    if d == 0:
        raise ValueError("delta = 0: cavity drive resonant with the empty cavity")
    if D == 0:
        raise ValueError("Delta must be nonzero")
    off = d - 1 / D
    if off == 0:
        raise ValueError("delta = 1/Delta: drive resonant with the one-excitation polariton")
    dE0 = -eta2 / d - 0.5j * params.kappa * eta2 / d ** 2
    dE1 = -eta2 / off - 0.5j * eta2 * (params.kappa * D * D + params.gamma) / (D * D * off * off)
    if params.Omega0 == 0:
        dE1p = 0j
    elif params.eta == 0:
        raise ValueError("eta = 0 with Omega0 > 0: shift from the qubit drive diverges")
    else:
        dE1p = (-0.5j * params.Omega0 ** 2 * (params.N - 1) / eta2
                * (params.kappa / 2 + params.gamma / D ** 2))
    return PerturbativeShifts(complex(dE0), complex(dE1), complex(dE1p))


# --- W-state error law --------------------------------------------------------------

def w_error_expression(kappa: float, gamma: float, Delta: float, eta2_over_Omega0: float,
                       N: int) -> float:
    """First-order W-preparation error for a resonant constant pulse."""
    x = eta2_over_Omega0
    return (math.pi / (2 * math.sqrt(N))
            * (x * (1.25 * kappa * Delta ** 2 + gamma)
               + (N - 1) / x * (kappa / 2 + gamma / Delta ** 2)))


def w_prefactor(N: int) -> float:
    """``sqrt(C)`` times the optimal W error: ``pi sqrt(2 (1 - 1/N)(sqrt(5/8) + 7/8))``."""
    if N < 2:
        raise ValueError("W preparation needs N >= 2")
    return math.pi * math.sqrt(2 * (1 - 1 / N) * (math.sqrt(5 / 8) + 7 / 8))


def optimal_w_parameters(kappa: float, gamma: float, N: int) -> tuple[float, float]:
    """``(Delta_opt, (eta^2/Omega0)_opt)`` minimizing :func:`w_error_expression`."""
    if N < 2:
        raise ValueError("W preparation needs N >= 2")
    if not (kappa > 0 and gamma > 0):
        raise ValueError("optimal W parameters need kappa > 0 and gamma > 0")
    return (8 / 5) ** 0.25 * math.sqrt(gamma / kappa), math.sqrt((N - 1) / 2 * kappa / gamma)


def optimal_w_ratio(kappa: float, gamma: float, Delta: float, N: int) -> float:
    """``eta^2/Omega0`` minimizing :func:`w_error_expression` at a fixed ``Delta``."""
    if N < 2:
        raise ValueError("W preparation needs N >= 2")
    num = (N - 1) * (kappa / 2 + gamma / Delta ** 2)
    den = 1.25 * kappa * Delta ** 2 + gamma
    if not (num > 0 and den > 0):
        raise ValueError("need kappa > 0 or gamma > 0")
    return math.sqrt(num / den)


# --- gate error laws ----------------------------------------------------------------

# (ground, excited) dwell-time labels of each N0 class
GATE_TAU_LABELS = {
    "CZ": {0: ("1'1'", None), 1: ("1'0", "1'1"), 2: ("00", "W")},
    "C2Z": {0: ("1'1'1'", None), 1: ("1'1'0", "1'1'1"), 2: ("1'00", "1'W"), 3: ("000", "W1")},
}

# sqrt(C) x optimal error for the published time-optimal pulses; used only when
# no dwell times are supplied
QUOTED_GATE_PREFACTORS = {"CZ": 6.45, "C2Z": 14.66}


def _gate_key(gate) -> str:
    key = str(getattr(gate, "name", gate)).upper()
    if key not in GATE_TAU_LABELS:
        raise ValueError(f"unknown gate {gate!r}")
    return key


def gate_coefficients(gate, tau) -> tuple[float, float, float, int]:
    """Coefficients ``(P, Q, R, k)`` of the gate error in ``y = eta^2/Omega0``.

    ``error = (y/k)(kappa Delta^2 P + gamma Q) + R/(k y) (kappa/2 + gamma/Delta^2)``.
    """
    key = _gate_key(gate)
    classes = GATE_TAU_LABELS[key]
    N = max(classes)
    needed = [lab for pair in classes.values() for lab in pair if lab]
    missing = [lab for lab in needed if lab not in tau]
    if missing:
        raise KeyError(f"dwell times missing for {missing}")
    S0 = E = R = 0.0
    for n0, (ground, excited) in classes.items():
        w = math.comb(N, n0)
        S0 += w * tau[ground]
        if excited:
            E += w * tau[excited]
            R += w * (n0 - 1) * tau[excited]
    return S0 / 4 + E, E, R, 2 ** N


def gate_error_expression(gate, tau, kappa: float, gamma: float, Delta: float,
                          eta2_over_Omega0: float) -> float:
    P, Q, R, k = gate_coefficients(gate, tau)
    y = eta2_over_Omega0
    return (y / k) * (kappa * Delta ** 2 * P + gamma * Q) + R / (k * y) * (kappa / 2 + gamma / Delta ** 2)


def optimal_gate_parameters(gate, tau, kappa: float, gamma: float) -> tuple[float, float]:
    """``(Delta_opt, (Omega0/eta^2)_opt)`` minimizing :func:`gate_error_expression`."""
    if not (kappa > 0 and gamma > 0):
        raise ValueError("optimal gate parameters need kappa > 0 and gamma > 0")
    P, Q, R, _ = gate_coefficients(gate, tau)
    Delta = (2 * Q / P) ** 0.25 * math.sqrt(gamma / kappa)
    return Delta, optimal_gate_ratio(gate, tau, kappa, gamma, Delta)


def optimal_gate_ratio(gate, tau, kappa: float, gamma: float, Delta: float) -> float:
    """``Omega0/eta^2`` minimizing :func:`gate_error_expression` at a fixed ``Delta``."""
    P, Q, R, _ = gate_coefficients(gate, tau)
    num = R * (kappa / 2 + gamma / Delta ** 2)
    den = kappa * Delta ** 2 * P + gamma * Q
    if not (num > 0 and den > 0):
        raise ValueError("need kappa > 0 or gamma > 0")
    return math.sqrt(den / num)


def optimal_gate_prefactor(gate, tau) -> float:
    """``sqrt(C)`` times the minimum of :func:`gate_error_expression`."""
    P, Q, R, k = gate_coefficients(gate, tau)
    return 2 / k * math.sqrt(R * (math.sqrt(2 * P * Q) + P + Q / 2))


def analytic_infidelity(protocol: str, C: float, N: int | None = None, tau=None) -> float:
    """Optimal first-order error of ``W``, ``CZ`` or ``C2Z`` at cooperativity ``C``.

    Gate prefactors come from ``tau`` when supplied, otherwise from the quoted
    values for the published pulses.
    """
    if not C > 0:
        raise ValueError("cooperativity must be positive")
    key = str(protocol).upper()
    if key == "W":
        if N is None:
            raise ValueError("W error needs N")
        return w_prefactor(N) / math.sqrt(C)
    key = _gate_key(key)
    pref = QUOTED_GATE_PREFACTORS[key] if tau is None else optimal_gate_prefactor(key, tau)
    return pref / math.sqrt(C)
