import math

import numpy as np
import pytest

from cavity_blockade.pulses import (
    GATES,
    PulseFileError,
    best_theta,
    builtin_pulse,
    constant_pulse,
    gate_amplitudes,
    gate_infidelity,
    load_pulse,
    sampled_pulse,
    save_pulse,
    synthesize_time_optimal,
)


def test_constant_pulse_w_example():
    p = constant_pulse(1e-3, math.pi / math.sqrt(2), delta_gl=0.01)
    assert p.duration == pytest.approx(math.pi / (math.sqrt(2) * 1e-3))
    assert p.omega(0.0) == pytest.approx(1e-3)
    assert p.omega(100.0) == pytest.approx(1e-3 * np.exp(1j))
    assert p.total_phase_rate(5.0) == pytest.approx(0.01)


@pytest.mark.parametrize("kw", [dict(Omega0=1.0, area=0.0), dict(Omega0=0.0, area=1.0)])
def test_constant_pulse_rejects_empty(kw):
    with pytest.raises(ValueError):
        constant_pulse(**kw)


def test_sampled_pulse_validation():
    tau = np.linspace(0, 2, 5)
    with pytest.raises(ValueError):
        sampled_pulse(tau[::-1], np.zeros(5))
    with pytest.raises(ValueError):
        sampled_pulse(tau + 0.1, np.zeros(5))
    with pytest.raises(ValueError):
        sampled_pulse(tau, [0, 0, 4, 0, 0])
    with pytest.raises(ValueError):
        sampled_pulse(tau[:3], np.zeros(3))


def test_spline_phase_and_rate():
    tau = np.linspace(0, 4, 41)
    p = sampled_pulse(tau, 0.3 * tau ** 2, Omega0=2.0)
    assert p.phase(1.5) == pytest.approx(0.3 * 2.25)
    assert p.phase_rate(1.5) == pytest.approx(0.9)
    assert p.phase(10.0) == pytest.approx(p.phase(4.0))
    assert p.phase_rate(10.0) == 0.0
    assert p.total_phase_rate(0.5) == pytest.approx(2.0 * 0.6)
    assert abs(p.omega(0.7)) == pytest.approx(2.0)


@pytest.mark.parametrize("gate, area", [("CZ", 7.612), ("C2Z", 10.809)])
def test_builtin_pulses(gate, area):
    p = builtin_pulse(gate, Omega0=0.5)
    assert p.area == area and p.gate == gate and p.Omega0 == 0.5
    assert p.duration == pytest.approx(area / 0.5)


def test_round_trip_is_exact(tmp_path):
    p = builtin_pulse("CZ")
    q = load_pulse(save_pulse(p, tmp_path / "cz.pulse"))
    assert q.checksum() == p.checksum()
    np.testing.assert_array_equal(q.phi, p.phi)


def test_pulse_without_gate_round_trips(tmp_path):
    p = sampled_pulse(np.linspace(0, 1, 5), np.zeros(5))
    assert load_pulse(save_pulse(p, tmp_path / "x.pulse")).gate is None


def write(tmp_path, text):
    path = tmp_path / "p.pulse"
    path.write_text(text)
    return path


def test_shuffled_rows_rejected_with_line_number(tmp_path):
    path = write(tmp_path, "# gate: CZ\n# area: 3\n0 0\n2 0.1\n1 0.2\n3 0\n")
    with pytest.raises(PulseFileError, match=":5:"):
        load_pulse(path)


@pytest.mark.parametrize("text, match", [
    ("# area: 3\n0 0\n1 x\n2 0\n3 0\n", ":3: non-numeric"),
    ("# area: 3\n0 0 0\n", ":2: expected two columns"),
    ("0 0\n1 0\n2 0\n3 0\n", "missing '# area:'"),
    ("# area: 3.5\n0 0\n1 0\n2 0\n3 0\n", "does not match area"),
    ("# area: 3\n# gate: CNOT\n0 0\n1 0\n2 0\n3 0\n", "unknown gate"),
    ("# area: 3\n0.5 0\n1 0\n2 0\n3 0\n", "start at 0"),
    ("# area: 2\n0 0\n1 0\n2 0\n", "at least 4"),
])
def test_malformed_files(tmp_path, text, match):
    with pytest.raises(PulseFileError, match=match):
        load_pulse(write(tmp_path, text))


def test_area_tolerance(tmp_path):
    assert load_pulse(write(tmp_path, "# area: 3.0000000000001\n0 0\n1 0\n2 0\n3 0\n")).area == pytest.approx(3)


def test_bundled_cz_satisfies_gate_conditions():
    spec = GATES["CZ"]
    amps = gate_amplitudes(builtin_pulse("CZ"), spec, nsteps=4000)
    infid, theta = gate_infidelity(amps, spec)
    assert infid < 1e-8
    xi1, xi2 = np.angle(amps[1]), np.angle(amps[2])
    assert abs(amps[1]) == pytest.approx(1, abs=1e-6) and abs(amps[2]) == pytest.approx(1, abs=1e-6)
    assert abs(np.angle(np.exp(1j * (xi2 - 2 * xi1 - math.pi)))) < 1e-6
    assert xi1 % (2 * math.pi) == pytest.approx(theta, abs=1e-6)


def test_bundled_c2z_gate_conditions():
    spec = GATES["C2Z"]
    infid, _ = gate_infidelity(gate_amplitudes(builtin_pulse("C2Z"), spec, nsteps=4000), spec)
    assert infid < 1e-6


def test_best_theta_recovers_known_phase():
    spec = GATES["CZ"]
    theta0 = 0.3
    sums = {n0: spec.multiplicity(n0) * np.exp(1j * spec.target_phase(n0, theta0)) / 4 for n0 in range(3)}
    theta, fid = best_theta(spec, sums)
    assert theta == pytest.approx(theta0, abs=1e-6)  # flat quadratic maximum
    assert fid == pytest.approx(1.0, abs=1e-12)


def test_gate_infidelity_at_fixed_theta():
    spec = GATES["CZ"]
    amps = {0: 1.0, 1: 1.0, 2: -1.0}
    assert gate_infidelity(amps, spec, theta=0.0) == pytest.approx(0.0, abs=1e-15)
    assert gate_infidelity(amps, spec, theta=math.pi / 2) > 0.1


def test_unknown_gate():
    with pytest.raises(ValueError):
        gate_amplitudes(builtin_pulse("CZ"), "CNOT")


@pytest.mark.slow
def test_synthesis_converges_for_cz():
    res = synthesize_time_optimal("CZ", segments=16, starts=4, seed=1, nsteps=300, tol=1e-6)
    assert res.converged and res.objective < 1e-6
    assert np.all(np.abs(np.diff(res.pulse.phi)) <= math.pi)
    assert res.pulse.area == 7.612


@pytest.mark.slow
def test_synthesis_below_time_optimal_area_reports_failure():
    with pytest.warns(RuntimeWarning, match="NOT converged"):
        res = synthesize_time_optimal("CZ", area=7.0, segments=16, starts=3, seed=0, nsteps=300,
                                      max_iter=400)
    assert not res.converged and res.objective > 1e-4


def test_synthesis_needs_segments():
    with pytest.raises(ValueError):
        synthesize_time_optimal("CZ", segments=8)
