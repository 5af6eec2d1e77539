"""Acceptance criteria 1-11, one pass/fail line each.

Long-running: the full-model gate and N=50 points take tens of minutes in total
on one core. Each test records its line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.
"""

import math
from functools import lru_cache

import numpy as np

import test_properties as props
from cavity_blockade.basis import THREE_LEVEL, enumerate_symmetric_basis, product_operator, symmetrizer
from cavity_blockade.cli import execute, parse_config
from cavity_blockade.hamiltonian import PhysicalParams, build_full_hamiltonian
from cavity_blockade.polariton import (
    blockade_detuning,
    dressed_eigenvalues,
    dressed_matrix,
    perturbative_shifts,
    polariton_spectrum,
    w_prefactor,
)
from cavity_blockade.protocols import (
    converge_in_gT,
    gate_dwell_times,
    gate_parameters,
    run_gate,
    run_w_preparation,
    w_parameters,
)
from cavity_blockade.pulses import builtin_pulse


def rates(C, gamma_over_kappa=1.0):
    kappa = 1 / math.sqrt(C * gamma_over_kappa)
    return kappa, gamma_over_kappa * kappa


@lru_cache(maxsize=None)
def w_plateau(C, gamma_over_kappa=1.0, N=2, gT0=1000.0):
    kappa, gamma = rates(C, gamma_over_kappa)

    def run(gT):
        return run_w_preparation(w_parameters(kappa, gamma, N, gT), n_samples=20, with_budget=False)

    result, history = converge_in_gT(run, gT0)
    return result.infidelity, history


@lru_cache(maxsize=None)
def gate_plateau(gate, C, gT0=1000.0):
    pulse = builtin_pulse(gate)
    tau = gate_dwell_times(gate, pulse)
    kappa, gamma = rates(C)

    def run(gT):
        return run_gate(gate, gate_parameters(gate, kappa, gamma, gT, tau=tau), pulse, n_samples=20,
                        with_budget=False)

    result, history = converge_in_gT(run, gT0)
    return result.infidelity, history


def within(value, target, rel):
    return abs(value / target - 1) <= rel


# --- 1-3: spectra and operators --------------------------------------------------------

def test_criterion_01_spectral_exactness(criterion):
    rng = np.random.default_rng(1)
    basis = enumerate_symmetric_basis(5, 2)
    worst = 0.0
    for _ in range(100):
        Delta, delta = rng.uniform(-5, 5, size=2)
        H = build_full_hamiltonian(PhysicalParams(kappa=0, gamma=0, Delta=Delta, delta=delta, N=5),
                                   basis).dense(0.0)
        for n in range(1, 6):
            idx = [basis.index[(n, 0, 1)], basis.index[(n - 1, 1, 0)]]
            ev = np.sort(np.linalg.eigvals(H[np.ix_(idx, idx)]).real)
            spec = polariton_spectrum(n, Delta, delta)
            ref = np.sort([spec.eps_minus.real, spec.eps_plus.real])
            worst = max(worst, float(np.max(np.abs(ev - ref))))
    criterion(1, worst <= 1e-12, f"max |eps_num - eps_closed| = {worst:.2e} (tol 1e-12, 100 draws, n=1..5)")


def test_criterion_02_oracle_equivalence(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for N in (2, 3):
        for m_max in (1, 2):
            kappa, gamma, gamma1, Delta, delta, eta = rng.uniform(0.1, 2.0, size=6)
            p = PhysicalParams(kappa=kappa, gamma=gamma, gamma1=gamma1, Delta=Delta, delta=delta,
                               eta=eta, N=N)
            basis = enumerate_symmetric_basis(N, m_max)
            H = build_full_hamiltonian(p, basis)

            def op(kind):
                return product_operator(kind, N, m_max, THREE_LEVEL)

            full_static = ((delta - 0.5j * kappa) * op("photons") + (Delta - 0.5j * gamma) * op("ne")
                           - 0.5j * gamma1 * op("n1") + op("Sm_adag") + op("Sp_a")
                           + 1j * eta * (op("adag") - op("a")))
            V = symmetrizer(basis)
            for full, sym in ((full_static, H.static_part), (op("raise01"), H.drive_part),
                              (op("lower01"), H.drive_conj_part)):
                worst = max(worst, float(np.max(np.abs(V.T @ full @ V - sym.toarray()))))
    criterion(2, worst <= 1e-12, f"max entry difference = {worst:.2e} (tol 1e-12, N in {{2,3}}, m_max in {{1,2}})")


def exact_block_eigenvalue(p, N, start, m_max=14):
    """Eigenvalue of the drive-free block containing ``start`` with the largest overlap."""
    basis = enumerate_symmetric_basis(N, m_max)
    H = build_full_hamiltonian(p.updated(N=N), basis).dense(0.0)
    idx = [i for i, s in enumerate(basis.states) if s.n == start[0] + start[1]]
    vals, vecs = np.linalg.eig(H[np.ix_(idx, idx)])
    k = int(np.argmax(np.abs(vecs[idx.index(basis.index[start])])))
    return vals[k]


def test_criterion_03_blockade_identities(criterion):
    Delta = 1.7
    eps = abs(polariton_spectrum(2, Delta, blockade_detuning(Delta)).eps_minus)
    p = PhysicalParams(kappa=0.03, gamma=0.02, Delta=2.0, eta=0.1)
    d = dressed_eigenvalues(p)
    ident = max(abs(d.lambda_plus + d.lambda_minus + 0.5j * d.gamma_eff),
                abs(d.lambda_plus * d.lambda_minus + d.eta_eff ** 2))
    ident = max(ident, float(np.max(np.abs(np.sort_complex(np.linalg.eigvals(dressed_matrix(p)))
                                           - np.sort_complex([d.lambda_plus, d.lambda_minus])))))
    ratios = []
    for field, N, start in (("dE0", 0, (0, 0, 0)), ("dE1", 1, (1, 0, 0))):
        res = []
        for s in (1.0, 0.5, 0.25):
            q = PhysicalParams(kappa=0.04 * s, gamma=0.04 * s, Delta=2.0, eta=0.08 * s)
            res.append(abs(exact_block_eigenvalue(q, N, start) - getattr(perturbative_shifts(q), field)))
        ratios += [res[0] / res[1], res[1] / res[2]]
    ok = eps <= 1e-12 and ident <= 1e-12 and all(8.0 <= r <= 32.0 for r in ratios)
    criterion(3, ok, f"|eps_2^-| = {eps:.1e}, identity error {ident:.1e}, residual reduction under "
                     f"halving {', '.join(f'{r:.1f}' for r in ratios)} (need 16x within factor 2)")


# --- 4-9: error laws -------------------------------------------------------------------------

def test_criterion_04_w_error_law(criterion):
    lines, ok = [], True
    for C in (1e2, 1e4):
        target = 4.05 / math.sqrt(C)
        vals = [w_plateau(C, r)[0] for r in (0.1, 1.0, 10.0)]
        spread = (max(vals) - min(vals)) / np.mean(vals)
        ok &= all(within(v, target, 0.10) for v in vals) and spread <= 0.10
        lines.append(f"C={C:.0e}: " + "/".join(f"{v:.4f}" for v in vals)
                     + f" vs {target:.4f}, gamma/kappa spread {spread:.1%}")
    criterion(4, ok, "; ".join(lines))


def test_criterion_05_w_N_scaling(criterion):
    C, N = 1e4, 50
    infid, history = w_plateau(C, 1.0, N=N, gT0=4000.0)
    target = w_prefactor(N) / math.sqrt(C)
    criterion(5, within(infid, target, 0.15),
              f"N=50, C=1e4: {infid:.4f} vs {target:.4f} (rel {infid / target - 1:+.1%}, tol 15%), "
              f"plateau at gT={history[-1][0]:.0f}")


def test_criterion_06_budget_closure(criterion):
    worst, parts = 0.0, []
    for gT in (1e3, 1e4, 1e5):
        r = run_w_preparation(w_parameters(1e-3, 1e-3, 2, gT), n_samples=50)
        dev = abs(r.budget.total - r.infidelity) / r.infidelity
        worst = max(worst, dev)
        parts.append(f"gT={gT:.0e}: {dev:.2%}")
    criterion(6, worst <= 0.05, "budget vs infidelity " + ", ".join(parts) + " (tol 5%)")


def test_criterion_07_cz_gate(criterion):
    pulse = builtin_pulse("CZ")
    lossless = run_gate("CZ", PhysicalParams(kappa=0, gamma=0, Delta=2.0, eta=0.3, Omega0=0.01, N=2),
                        pulse, model="effective").fidelity
    ok = 1 - lossless <= 1e-6
    parts = [f"lossless effective 1-F = {1 - lossless:.1e}"]
    for C in (1e2, 1e4):
        infid, _ = gate_plateau("CZ", C)
        target = 6.45 / math.sqrt(C)
        ok &= within(infid, target, 0.15)
        parts.append(f"C={C:.0e}: {infid:.4f} vs {target:.4f} ({infid / target - 1:+.1%})")
    criterion(7, ok, "; ".join(parts) + " (tol 15%)")


def test_criterion_08_c2z_gate(criterion):
    ok, parts = True, []
    for C in (1e2, 1e4):
        infid, _ = gate_plateau("C2Z", C)
        target = 14.66 / math.sqrt(C)
        ok &= within(infid, target, 0.15)
        parts.append(f"C={C:.0e}: {infid:.4f} vs {target:.4f} ({infid / target - 1:+.1%})")
    criterion(8, ok, "; ".join(parts) + " (tol 15%)")


def test_criterion_09_loglog_slope(criterion):
    Cs = np.array([1e2, 1e3, 1e4])
    w = [w_plateau(C)[0] for C in Cs]
    cz = [gate_plateau("CZ", C)[0] for C in Cs]
    slopes = [np.polyfit(np.log(Cs), np.log(v), 1)[0] for v in (w, cz)]
    criterion(9, all(abs(s + 0.5) <= 0.05 for s in slopes),
              f"slope W {slopes[0]:.3f}, CZ {slopes[1]:.3f} (need -0.5 +- 0.05)")


# --- 10: platforms ----------------------------------------------------------------------------

def preset_run(protocol, preset, N=None, **extra):
    data = {"protocol": protocol, "preset": preset, "n_samples": 20, **extra}
    if N is not None:
        data["N"] = N
    return execute(parse_config(data))


def test_criterion_10_platform_presets(criterion):
    rb, _ = preset_run("W", "rb_fiber_cavity", N=10)
    ryd, study = preset_run("W", "rydberg_microwave", N=10)
    caf, _ = preset_run("W", "caf_stripline", N=10)
    cz, _ = preset_run("CZ", "rydberg_microwave", model="effective")
    c2z, _ = preset_run("C2Z", "rydberg_microwave", model="effective")
    checks = [
        (abs(rb.fidelity - 0.86) <= 0.03, f"Rb W F={rb.fidelity:.3f} (0.86)"),
        (abs(ryd.fidelity - 0.983) <= 0.03 and 0.5 <= ryd.gT / 930 <= 2.0,
         f"Rydberg W max F={ryd.fidelity:.3f} at gT={ryd.gT:.0f} (0.983 near 930)"),
        (abs(caf.fidelity - 0.91) <= 0.03, f"CaF W F={caf.fidelity:.3f} (0.91)"),
        (within(cz.infidelity, 4.5e-3, 0.20), f"Rydberg CZ 1-F={cz.infidelity:.2e} (4.5e-3)"),
        (within(c2z.infidelity, 7e-3, 0.20), f"Rydberg C2Z 1-F={c2z.infidelity:.2e} (7e-3)"),
    ]
    criterion(10, all(ok for ok, _ in checks),
              "; ".join(f"{text} {'ok' if ok else 'off'}" for ok, text in checks))


# --- 11: property suite -------------------------------------------------------------------------

PROPERTIES = {
    "norm monotonicity": props.test_norm_never_grows,
    "dwell-time sum rule": props.test_dwell_times_sum_to_area,
    "conserved-number blocks": props.test_conserved_number_blocks,
    "truncation check": props.test_truncation_check_reads_boundary_layer,
    "accepted truncation": props.test_accepted_truncation_is_converged,
}


def test_criterion_11_property_suite(criterion, tmp_path_factory):
    failed = []
    for name, prop in PROPERTIES.items():
        try:
            prop()
        except AssertionError:
            failed.append(name)
    try:
        props.test_pulse_file_round_trip(tmp_path_factory)
    except AssertionError:
        failed.append("pulse round-trip")
    criterion(11, not failed, f"{len(PROPERTIES) + 1} properties x 200 cases"
              + (f"; failed: {', '.join(failed)}" if failed else ""))
