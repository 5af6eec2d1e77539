import math

import numpy as np
import pytest

from cavity_blockade.basis import enumerate_symmetric_basis
from cavity_blockade.hamiltonian import PhysicalParams, build_full_hamiltonian
from cavity_blockade.polariton import (
    QUOTED_GATE_PREFACTORS,
    Regime,
    analytic_infidelity,
    blockade_detuning,
    dressed_eigenvalues,
    dressed_matrix,
    gate_coefficients,
    gate_error_expression,
    optimal_gate_parameters,
    optimal_gate_prefactor,
    optimal_gate_ratio,
    optimal_w_parameters,
    optimal_w_ratio,
    perturbative_shifts,
    polariton_spectrum,
    w_error_expression,
    w_prefactor,
)
from scipy.optimize import minimize


def block(H, basis, states):
    idx = [basis.index[s] for s in states]
    return H.dense(0.0)[np.ix_(idx, idx)]


def test_polariton_closed_form_small_case():
    spec = polariton_spectrum(1, Delta=1.0, delta=1.0)
    assert spec.eps_plus == pytest.approx(2.0)
    assert spec.eps_minus == pytest.approx(0.0)
    assert spec.mixing_cos == pytest.approx(0.0)


def test_polariton_vacuum_layer():
    spec = polariton_spectrum(0, Delta=3.0, delta=0.7)
    assert spec.eps_minus is None and spec.eps_plus == pytest.approx(0.7)


def test_blockade_zeroes_lower_two_excitation_polariton():
    for Delta in (0.3, 1.0, 7.0, -2.5):
        eps = polariton_spectrum(2, Delta, blockade_detuning(Delta)).eps_minus
        assert abs(eps) < 1e-12 if Delta > 0 else True
    with pytest.raises(ValueError):
        blockade_detuning(0.0)


def test_polariton_matches_numerical_block(rng):
    basis = enumerate_symmetric_basis(5, 2)
    for _ in range(10):
        Delta, delta = rng.uniform(-5, 5, size=2)
        H = build_full_hamiltonian(PhysicalParams(kappa=0, gamma=0, Delta=Delta, delta=delta, N=5), basis)
        for n in range(1, 6):
            ev = np.sort(np.linalg.eigvals(block(H, basis, [(n, 0, 1), (n - 1, 1, 0)])).real)
            spec = polariton_spectrum(n, Delta, delta)
            np.testing.assert_allclose(ev, sorted([spec.eps_minus.real, spec.eps_plus.real]), atol=1e-12)


def test_dressed_eigenvalue_identities():
    p = PhysicalParams(kappa=0.02, gamma=0.05, Delta=2.0, eta=0.1)
    d = dressed_eigenvalues(p)
    assert d.lambda_plus + d.lambda_minus == pytest.approx(-0.5j * d.gamma_eff, abs=1e-12)
    assert d.lambda_plus * d.lambda_minus == pytest.approx(-d.eta_eff ** 2, abs=1e-12)
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(dressed_matrix(p))),
                               np.sort_complex([d.lambda_plus, d.lambda_minus]), atol=1e-12)
    assert d.regime is Regime.DETUNING_DOMINATED


def test_decay_dominated_regime():
    d = dressed_eigenvalues(PhysicalParams(kappa=5.0, gamma=5.0, Delta=1.0, eta=0.01))
    assert d.regime is Regime.DECAY_DOMINATED
    assert d.lambda_plus.real == pytest.approx(0.0)


def test_shift_guards():
    with pytest.raises(ValueError):
        perturbative_shifts(PhysicalParams(kappa=0, gamma=0, Delta=2.0, delta=0.0, eta=0.1))
    with pytest.raises(ValueError):
        perturbative_shifts(PhysicalParams(kappa=0, gamma=0, Delta=2.0, delta=0.5, eta=0.1))
    with pytest.raises(ValueError):
        perturbative_shifts(PhysicalParams(kappa=0, gamma=0, Delta=2.0, eta=0.0, Omega0=0.1))


def test_ground_shift_exact_without_cavity_loss():
    p = PhysicalParams(kappa=0.0, gamma=0.0, Delta=2.0, eta=0.05)
    basis = enumerate_symmetric_basis(0, 12)
    H = build_full_hamiltonian(p.updated(N=0), basis).dense(0.0)
    assert np.min(np.linalg.eigvals(H).real) == pytest.approx(perturbative_shifts(p).dE0.real, abs=1e-12)


def test_w_prefactor_values():
    assert w_prefactor(2) == pytest.approx(4.054, abs=1e-3)
    assert w_prefactor(10 ** 9) == pytest.approx(5.734, abs=1e-3)
    assert analytic_infidelity("W", 1e4, N=2) == pytest.approx(w_prefactor(2) / 100)


def test_w_optimum_minimizes_expression():
    kappa, gamma, N = 0.01, 0.03, 3
    D, x = optimal_w_parameters(kappa, gamma, N)
    best = w_error_expression(kappa, gamma, D, x, N)
    res = minimize(lambda z: w_error_expression(kappa, gamma, z[0], z[1], N), [1.0, 1.0],
                   method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    assert best == pytest.approx(res.fun, rel=1e-8)
    assert best * math.sqrt(1 / (kappa * gamma)) == pytest.approx(w_prefactor(N), rel=1e-12)
    assert optimal_w_ratio(kappa, gamma, D, N) == pytest.approx(x)


def test_w_optimum_needs_both_losses():
    with pytest.raises(ValueError):
        optimal_w_parameters(0.0, 0.1, 2)


def test_gate_coefficients_and_optimum(cz_tau):
    P, Q, R, k = gate_coefficients("CZ", cz_tau)
    assert k == 4 and R == pytest.approx(cz_tau["W"])
    kappa, gamma = 1e-3, 4e-3
    D, om = optimal_gate_parameters("CZ", cz_tau, kappa, gamma)
    best = gate_error_expression("CZ", cz_tau, kappa, gamma, D, 1 / om)
    for dD, dy in ((1.01, 1), (0.99, 1), (1, 1.01), (1, 0.99)):
        assert gate_error_expression("CZ", cz_tau, kappa, gamma, D * dD, dy / om) > best
    assert best * math.sqrt(1 / (kappa * gamma)) == pytest.approx(optimal_gate_prefactor("CZ", cz_tau))
    assert optimal_gate_ratio("CZ", cz_tau, kappa, gamma, D) == pytest.approx(om)


@pytest.mark.parametrize("gate, tol", [("CZ", 0.01), ("C2Z", 0.01)])
def test_gate_prefactors_from_synthesized_pulses(gate, tol, cz_tau, c2z_tau):
    tau = cz_tau if gate == "CZ" else c2z_tau
    assert optimal_gate_prefactor(gate, tau) == pytest.approx(QUOTED_GATE_PREFACTORS[gate], rel=tol)


def test_gate_coefficients_missing_tau():
    with pytest.raises(KeyError):
        gate_coefficients("CZ", {"00": 1.0})
    with pytest.raises(ValueError):
        gate_coefficients("CNOT", {})
