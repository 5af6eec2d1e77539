"""End-to-end W-state preparation and CZ / C2Z gate protocols."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .basis import enumerate_four_level_basis, enumerate_symmetric_basis
from .hamiltonian import (
    EffectiveModel,
    PhysicalParams,
    TimeDependentOperator,
    build_effective_hamiltonian,
    build_effective_model,
    build_four_level_hamiltonian,
    build_full_hamiltonian,
)
from .polariton import (
    GATE_TAU_LABELS,
    optimal_gate_parameters,
    optimal_gate_ratio,
    optimal_w_parameters,
    optimal_w_ratio,
)
from .propagate import (
    TRUNCATION_THRESHOLD,
    ErrorBudget,
    IntegrationError,
    TauTable,
    Trajectory,
    check_truncation,
    evolve,
)
from .pulses import GATES, PulseProfile, best_theta, constant_pulse

log = logging.getLogger(__name__)

__all__ = [
    "ProtocolResult",
    "TruncationError",
    "ConvergenceError",
    "run_w_preparation",
    "run_gate",
    "optimize_theta",
    "computational_amplitudes",
    "effective_subspace_hamiltonians",
    "gate_dwell_times",
    "gate_error_formula",
    "w_parameters",
    "gate_parameters",
    "converge_in_gT",
    "scan_gT_optimum",
]

MODELS = ("full", "effective", "four_level")
M_MAX_CAP = 10


class TruncationError(IntegrationError):
    """Population at the truncation boundary stays above threshold."""


class ConvergenceError(RuntimeError):
    """A gT study did not reach its plateau."""

    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass
class ProtocolResult:
    protocol: str
    model: str
    fidelity: float
    theta_opt: float | None
    budget: ErrorBudget
    populations: dict
    params_used: PhysicalParams
    gT: float
    trajectory: Trajectory | None = field(default=None, repr=False)
    details: dict = field(default_factory=dict, repr=False)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


# --- parameter recipes --------------------------------------------------------------

def w_parameters(kappa: float, gamma: float, N: int, gT: float, Delta: float | None = None,
                 eta2_over_Omega0: float | None = None, gamma1: float = 0.0) -> PhysicalParams:
    """Parameters for W preparation of duration ``gT``.

    An unset ``Delta`` takes the joint optimum; an unset ``eta^2/Omega0`` takes
    the optimum at the chosen ``Delta``.
    """
    if Delta is None:
        Delta = optimal_w_parameters(kappa, gamma, N)[0]
    if eta2_over_Omega0 is None:
        eta2_over_Omega0 = optimal_w_ratio(kappa, gamma, Delta, N)
    Omega0 = math.pi / (math.sqrt(N) * gT)
    return PhysicalParams(kappa=kappa, gamma=gamma, Delta=Delta, eta=math.sqrt(eta2_over_Omega0 * Omega0),
                          Omega0=Omega0, N=N, gamma1=gamma1)


def gate_parameters(gate: str, kappa: float, gamma: float, gT: float, tau: TauTable | None = None,
                    Delta: float | None = None, eta2_over_Omega0: float | None = None,
                    gamma1: float = 0.0, pulse: PulseProfile | None = None) -> PhysicalParams:
    """Gate parameters for duration ``gT``; unset values take the dwell-time optimum."""
    spec = GATES[gate.upper()]
    if Delta is None or eta2_over_Omega0 is None:
        if tau is None:
            if pulse is None:
                raise ValueError("need dwell times or a pulse to derive optimal gate parameters")
            tau = gate_dwell_times(gate, pulse)
        if Delta is None:
            Delta = optimal_gate_parameters(gate, tau, kappa, gamma)[0]
        if eta2_over_Omega0 is None:
            eta2_over_Omega0 = 1 / optimal_gate_ratio(gate, tau, kappa, gamma, Delta)
    Omega0 = spec.area / gT
    return PhysicalParams(kappa=kappa, gamma=gamma, Delta=Delta, eta=math.sqrt(eta2_over_Omega0 * Omega0),
                          Omega0=Omega0, N=spec.N, gamma1=gamma1)


# --- adaptive truncation ----------------------------------------------------------------

def _evolve_symmetric(params: PhysicalParams, pulse: PulseProfile, T: float, m_max: int,
                      n_max: int | None, tol: float, n_samples: int, adaptive: bool):
    """Full-model run with photon (and atomic) truncation grown until converged."""
    n_top = min(params.N, 3 if n_max is None else n_max)
    while True:
        basis = enumerate_symmetric_basis(params.N, m_max, n_top)
        H = build_full_hamiltonian(params, basis, pulse)
        traj = evolve(H, basis.ket(0, 0, 0), T, tol=tol, n_samples=n_samples)
        photon_edge = check_truncation(traj, basis, "photon")
        atomic_edge = check_truncation(traj, basis, "atomic")
        grow_m = photon_edge > TRUNCATION_THRESHOLD
        grow_n = atomic_edge > TRUNCATION_THRESHOLD
        if not (grow_m or grow_n):
            return basis, traj
        if not adaptive or (grow_m and m_max >= M_MAX_CAP):
            raise TruncationError(
                f"truncation boundary population too large (photon {photon_edge:.2e}, "
                f"atomic {atomic_edge:.2e}) at m_max={m_max}, n_max={n_top}")
        m_max += int(grow_m)
        n_top = min(params.N, n_top + int(grow_n))
        log.info("growing truncation to m_max=%d n_max=%d", m_max, n_top)


# --- W state --------------------------------------------------------------------------

def _w_populations(traj: Trajectory, basis, final: np.ndarray) -> dict:
    pops = {}
    for n in range(basis.n_max + 1):
        idx = [basis.index[(n, 0, m)] for m in range(basis.m_max + 1)]
        pops[f"D{n}"] = float(np.sum(np.abs(final[idx]) ** 2))
    pops["trace"] = sum(pops[f"D{n}"] for n in range(basis.n_max + 1))
    for s, p in zip(basis.states, np.abs(final) ** 2):
        if p > 1e-14:
            pops[f"|{s.a},{s.b},{s.m}>"] = float(p)
    return pops


def run_w_preparation(params: PhysicalParams, gT: float | None = None, model: str = "full",
                      m_max: int = 3, n_max: int | None = None, tol: float = 1e-10,
                      n_samples: int = 1000, with_budget: bool = True,
                      adaptive_truncation: bool = True) -> ProtocolResult:
    """Prepare ``|D1>`` from ``|D0> (x) |0>_cav`` with a resonant constant pulse.

    ``gT`` fixes ``Omega0 = pi / (sqrt(N) T)``; when given, ``eta`` is rescaled
    to keep ``eta^2/Omega0`` of ``params``. The fidelity is the overlap with the
    ideal ``|D1> (x) |0>_cav``.
    """
    if params.N < 2:
        raise ValueError("W preparation needs N >= 2")
    if model not in ("full", "effective"):
        raise ValueError(f"W model must be 'full' or 'effective', got {model!r}")
    if gT is not None:
        Omega0 = math.pi / (math.sqrt(params.N) * gT)
        ratio = params.eta ** 2 / params.Omega0 if params.Omega0 > 0 else None
        params = params.updated(Omega0=Omega0,
                                eta=params.eta if ratio is None else math.sqrt(ratio * Omega0))
    if not params.Omega0 > 0:
        raise ValueError("need Omega0 > 0 (or gT)")
    T = math.pi / (math.sqrt(params.N) * params.Omega0)

    if model == "effective":
        return _run_w_effective(params, T, tol, n_samples)

    pulse = constant_pulse(params.Omega0, math.pi / math.sqrt(params.N), params.delta_gl)
    basis, traj = _evolve_symmetric(params, pulse, T, m_max, n_max, tol, n_samples,
                                    adaptive_truncation)
    final = traj.final_state
    fidelity = float(abs(final[basis.index[(1, 0, 0)]]) ** 2)
    residual = 0.0
    if with_budget:
        if params.kappa == params.gamma == params.gamma1 == 0:
            residual = 1.0 - fidelity
        else:
            lossless = params.lossless()
            H0 = build_full_hamiltonian(lossless, basis, pulse)
            t0 = evolve(H0, basis.ket(0, 0, 0), T, tol=tol, n_samples=min(n_samples, 100))
            residual = 1.0 - float(abs(t0.final_state[basis.index[(1, 0, 0)]]) ** 2)
    budget = ErrorBudget(params.gamma * traj.integrals["ne"], params.kappa * traj.integrals["photons"],
                         residual, gamma1_loss=params.gamma1 * traj.integrals["n1"])
    return ProtocolResult("W", "full", fidelity, None, budget, _w_populations(traj, basis, final),
                          params, T, trajectory=traj,
                          details={"m_max": basis.m_max, "n_max": basis.n_max})


def _split_rates(model: EffectiveModel, n0: int):
    """Split ``(Gamma0, Gamma1^(n0))`` into kappa, gamma and gamma1 parts."""
    from dataclasses import replace

    parts = {}
    for name, kw in (("kappa", dict(gamma=0.0, gamma1=0.0)), ("gamma", dict(kappa=0.0, gamma1=0.0)),
                     ("gamma1", dict(kappa=0.0, gamma=0.0))):
        m = replace(model, **kw)
        if name != "kappa":
            m = replace(m, Gamma0=0.0)
        parts[name] = (m.Gamma0, m.Gamma1_of_N0(n0) if n0 >= 1 else 0.0)
    return parts


def _run_w_effective(params: PhysicalParams, T: float, tol: float, n_samples: int) -> ProtocolResult:
    model = build_effective_model(params)
    pulse = constant_pulse(params.Omega0, math.pi / math.sqrt(params.N))
    H = build_effective_hamiltonian(model, params.N, pulse)
    traj = evolve(H, np.array([1.0, 0.0], dtype=complex), T, tol=tol, n_samples=n_samples,
                  projectors={"D0": [1, 0], "D1": [0, 1]})
    fidelity = float(abs(traj.final_state[1]) ** 2)
    parts = _split_rates(model, params.N)
    loss = {k: g0 * traj.integrals["D0"] + g1 * traj.integrals["D1"] for k, (g0, g1) in parts.items()}
    lossless = evolve(build_effective_hamiltonian(build_effective_model(params.lossless()), params.N,
                                                  pulse), np.array([1.0, 0.0], dtype=complex), T,
                      tol=tol, n_samples=10)
    residual = 1.0 - float(abs(lossless.final_state[1]) ** 2)
    budget = ErrorBudget(loss["gamma"], loss["kappa"], residual, gamma1_loss=loss["gamma1"])
    pops = {"D0": float(abs(traj.final_state[0]) ** 2), "D1": fidelity}
    pops["trace"] = pops["D0"] + pops["D1"]
    return ProtocolResult("W", "effective", fidelity, None, budget, pops, params, T, trajectory=traj)


# --- gates ----------------------------------------------------------------------------

def _computational_states(N: int):
    return list(itertools.product(("0", "1'"), repeat=N))


def computational_amplitudes(state: np.ndarray, basis) -> np.ndarray:
    """Amplitudes ``<s, 0_cav|psi>`` over the ``2^N`` computational states (``0`` before ``1'``)."""
    return np.array([state[basis.index[(labels, 0)]] for labels in _computational_states(basis.N)])


def optimize_theta(final_state: np.ndarray, gate: str) -> tuple[float, float]:
    """Best single-qubit phase and fidelity for computational-state amplitudes.

    ``final_state`` lists ``<s, 0_cav|psi(T)>`` for the ``2^N`` computational
    states in the order of :func:`computational_amplitudes`; the input
    normalization ``2^{-N/2}`` is already contained in the amplitudes.
    """
    spec = GATES[gate.upper()]
    amps = np.asarray(final_state, dtype=complex)
    states = _computational_states(spec.N)
    if amps.shape != (len(states),):
        raise ValueError(f"expected {len(states)} computational amplitudes, got {amps.shape}")
    sums: dict[int, complex] = {}
    for labels, a in zip(states, amps):
        n0 = labels.count("0")
        sums[n0] = sums.get(n0, 0.0) + a / math.sqrt(2 ** spec.N)
    return best_theta(spec, sums)


def _check_gate_pulse(gate: str, pulse: PulseProfile):
    spec = GATES[gate.upper()]
    if abs(pulse.area - spec.area) > 1e-9:
        raise ValueError(f"{spec.name} needs pulse area {spec.area}, got {pulse.area}")
    return spec


def effective_subspace_hamiltonians(gate: str, model: EffectiveModel,
                                    pulse: PulseProfile) -> list[TimeDependentOperator]:
    """One operator per class ``N0 = 0..N`` (coupling ``sqrt(N0) Omega/2``)."""
    spec = GATES[gate.upper()]
    return [build_effective_hamiltonian(model, n0, pulse) for n0 in range(spec.N + 1)]


def gate_dwell_times(gate: str, pulse: PulseProfile, tol: float = 1e-11) -> TauTable:
    """Dimensionless dwell times of the lossless effective gate dynamics (``delta_gl = 0``)."""
    spec = _check_gate_pulse(gate, pulse)
    unit = pulse.with_(Omega0=1.0, delta_gl=0.0)
    model = build_effective_model(PhysicalParams(kappa=0.0, gamma=0.0, Delta=1.0, eta=1.0,
                                                 Omega0=1.0, N=spec.N))
    tau = TauTable()
    for n0, (ground, excited) in GATE_TAU_LABELS[spec.name].items():
        if excited is None:
            tau[ground] = spec.area
            continue
        H = build_effective_hamiltonian(model, n0, unit)
        traj = evolve(H, np.array([1.0, 0.0], dtype=complex), spec.area, tol=tol, n_samples=200,
                      projectors={ground: [1, 0], excited: [0, 1]})
        tau[ground] = traj.integrals[ground]
        tau[excited] = traj.integrals[excited]
    return tau


def gate_error_formula(gate: str, tau, model: EffectiveModel, Omega0: float) -> float:
    """First-order gate error ``(1/(2^N Omega0)) sum_q w_q Gamma_q tau_q``."""
    spec = GATES[gate.upper()]
    total = 0.0
    for n0, (ground, excited) in GATE_TAU_LABELS[spec.name].items():
        if ground not in tau or (excited and excited not in tau):
            raise KeyError(f"dwell times missing for class N0={n0}")
        w = spec.multiplicity(n0)
        total += w * model.Gamma0 * tau[ground]
        if excited:
            total += w * model.Gamma1_of_N0(n0) * tau[excited]
    return total / (2 ** spec.N * Omega0)


def run_gate(gate: str, params: PhysicalParams, pulse: PulseProfile, gT: float | None = None,
             model: str = "full", m_max: int = 3, tol: float = 1e-10, n_samples: int = 200,
             with_budget: bool = True, adaptive_truncation: bool = True) -> ProtocolResult:
    """Run the gate on the uniform superposition of computational states.

    ``model="full"`` evolves each class of ``N0`` atoms in ``|0>`` under the
    full Hamiltonian of those atoms and the cavity; atoms in ``|1'>`` are exact
    spectators, so this equals the four-level product-space evolution
    (``model="four_level"``, available as an independent check).
    ``model="effective"`` uses the two-level class Hamiltonians.
    """
    spec = _check_gate_pulse(gate, pulse)
    if params.N != spec.N:
        raise ValueError(f"{spec.name} acts on N={spec.N} atoms, params.N={params.N}")
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    if gT is not None:
        Omega0 = spec.area / gT
        ratio = params.eta ** 2 / params.Omega0 if params.Omega0 > 0 else None
        params = params.updated(Omega0=Omega0,
                                eta=params.eta if ratio is None else math.sqrt(ratio * Omega0))
    T = spec.area / params.Omega0

    if model == "four_level":
        return _run_gate_four_level(spec, params, pulse, T, m_max, tol, n_samples)

    runner = _gate_classes_effective if model == "effective" else _gate_classes_full
    amps, loss, traj = runner(spec, params, pulse, T, m_max, tol, n_samples, adaptive_truncation)
    theta, fid = best_theta(spec, {n0: spec.multiplicity(n0) * a / 2 ** spec.N for n0, a in amps.items()})
    residual = 0.0
    if with_budget:
        if params.kappa == params.gamma == params.gamma1 == 0:
            residual = 1.0 - fid
        else:
            amps0, _, _ = runner(spec, params.lossless(), pulse, T, m_max, tol, min(n_samples, 50),
                                 adaptive_truncation)
            _, fid0 = best_theta(spec, {n0: spec.multiplicity(n0) * a / 2 ** spec.N
                                        for n0, a in amps0.items()})
            residual = 1.0 - fid0
    budget = ErrorBudget(loss["gamma"], loss["kappa"], residual, gamma1_loss=loss["gamma1"])
    pops = {f"N0={n0}": float(abs(a) ** 2) for n0, a in amps.items()}
    return ProtocolResult(spec.name, model, fid, theta, budget, pops, params, T,
                          details={"class_amplitudes": amps, "class_trajectories": traj})


def _gate_classes_full(spec, params, pulse, T, m_max, tol, n_samples, adaptive):
    pulse = pulse.with_(Omega0=params.Omega0, delta_gl=params.delta_gl)
    amps, trajs = {}, {}
    loss = {"gamma": 0.0, "kappa": 0.0, "gamma1": 0.0}
    for n0 in range(spec.N + 1):
        p = params.updated(N=n0)
        basis, traj = _evolve_symmetric(p, pulse, T, m_max, None, tol, n_samples, adaptive)
        amps[n0] = complex(traj.final_state[basis.index[(0, 0, 0)]])
        w = spec.multiplicity(n0) / 2 ** spec.N
        loss["gamma"] += w * params.gamma * traj.integrals["ne"]
        loss["kappa"] += w * params.kappa * traj.integrals["photons"]
        loss["gamma1"] += w * params.gamma1 * traj.integrals["n1"]
        trajs[n0] = traj
    return amps, loss, trajs


def _gate_classes_effective(spec, params, pulse, T, m_max, tol, n_samples, adaptive):
    model = build_effective_model(params)
    pulse = pulse.with_(Omega0=params.Omega0, delta_gl=0.0)
    amps, trajs = {}, {}
    loss = {"gamma": 0.0, "kappa": 0.0, "gamma1": 0.0}
    for n0, H in enumerate(effective_subspace_hamiltonians(spec.name, model, pulse)):
        psi0 = np.zeros(H.dim, dtype=complex)
        psi0[0] = 1.0
        proj = {"g": np.eye(H.dim)[0]}
        if H.dim == 2:
            proj["e"] = np.eye(2)[1]
        traj = evolve(H, psi0, T, tol=tol, n_samples=n_samples, projectors=proj)
        amps[n0] = complex(traj.final_state[0])
        w = spec.multiplicity(n0) / 2 ** spec.N
        for name, (g0, g1) in _split_rates(model, n0).items():
            loss[name] += w * (g0 * traj.integrals["g"] + g1 * traj.integrals.get("e", 0.0))
        trajs[n0] = traj
    return amps, loss, trajs


def _run_gate_four_level(spec, params, pulse, T, m_max, tol, n_samples) -> ProtocolResult:
    basis = enumerate_four_level_basis(spec.N, m_max)
    pulse = pulse.with_(Omega0=params.Omega0, delta_gl=params.delta_gl)
    H = build_four_level_hamiltonian(params, basis, pulse)
    psi0 = sum(basis.ket(labels, 0) for labels in _computational_states(spec.N)) / math.sqrt(2 ** spec.N)
    traj = evolve(H, psi0, T, tol=tol, n_samples=n_samples)
    amps = computational_amplitudes(traj.final_state, basis)
    theta, fid = optimize_theta(amps, spec.name)
    budget = ErrorBudget(params.gamma * traj.integrals["ne"], params.kappa * traj.integrals["photons"],
                         0.0, gamma1_loss=params.gamma1 * traj.integrals["n1"])
    pops = {"".join(lab): float(abs(a) ** 2) for lab, a in zip(_computational_states(spec.N), amps)}
    return ProtocolResult(spec.name, "four_level", fid, theta, budget, pops, params, T, trajectory=traj,
                          details={"amplitudes": amps})


# --- gT studies -----------------------------------------------------------------------

def converge_in_gT(run: Callable[[float], ProtocolResult], gT0: float, rel: float = 0.02,
                   factor: float = 2.0, max_steps: int = 12) -> tuple[ProtocolResult, list]:
    """Double ``gT`` until the infidelity changes by less than ``rel`` (relative).

    Returns the last result and the ``(gT, infidelity)`` history.
    """
    history = []
    gT = gT0
    prev = run(gT)
    history.append((gT, prev.infidelity))
    for _ in range(max_steps):
        gT *= factor
        cur = run(gT)
        history.append((gT, cur.infidelity))
        if abs(cur.infidelity - prev.infidelity) <= rel * abs(cur.infidelity):
            return cur, history
        prev = cur
    raise ConvergenceError(f"infidelity did not plateau within {max_steps} doublings of gT", history)


def scan_gT_optimum(run: Callable[[float], ProtocolResult], gT_min: float, gT_max: float,
                    points: int = 13) -> tuple[ProtocolResult, list]:
    """Minimum of the infidelity over ``gT``: log-spaced scan plus bounded refinement."""
    grid = np.geomspace(gT_min, gT_max, points)
    results = [run(float(g)) for g in grid]
    history = [(float(g), r.infidelity) for g, r in zip(grid, results)]
    k = int(np.argmin([r.infidelity for r in results]))
    lo, hi = np.log(grid[max(k - 1, 0)]), np.log(grid[min(k + 1, points - 1)])
    cache = {}

    def f(lg):
        r = run(float(np.exp(lg)))
        cache[lg] = r
        history.append((float(np.exp(lg)), r.infidelity))
        return r.infidelity

    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
    best = cache.get(res.x) or run(float(np.exp(res.x)))
    if results[k].infidelity < best.infidelity:
        best = results[k]
    return best, sorted(history)
