"""Qubit-drive pulse profiles.

A pulse is a constant-amplitude drive ``Omega(t) = Omega0 exp[i(phi(t Omega0) + delta_gl t)]``
whose phase ``phi`` is a function of the dimensionless time ``tau = t Omega0``.
Sampled phases are interpolated with a not-a-knot cubic spline, which is
continuous in value and first derivative.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares, minimize, minimize_scalar

log = logging.getLogger(__name__)

__all__ = [
    "GATES",
    "GateSpec",
    "PulseProfile",
    "PulseFileError",
    "SynthesisResult",
    "constant_pulse",
    "sampled_pulse",
    "load_pulse",
    "save_pulse",
    "builtin_pulse",
    "gate_amplitudes",
    "gate_infidelity",
    "best_theta",
    "synthesize_time_optimal",
]


@dataclass(frozen=True)
class GateSpec:
    """Phase pattern of a symmetric controlled-phase gate.

    Computational states are grouped by ``N0``, the number of atoms in ``|0>``
    (the only state the global drive couples). The single-qubit phase
    ``theta`` is counted per atom in ``theta_label`` (``"0"`` or ``"1'"``) and
    the class ``pi_class`` picks up the extra conditional phase ``pi``.
    """

    name: str
    N: int
    area: float
    pi_class: int
    theta_label: str

    def multiplicity(self, n0: int) -> int:
        return math.comb(self.N, n0)

    def target_phase(self, n0: int, theta):
        count = n0 if self.theta_label == "0" else self.N - n0
        return count * theta + (math.pi if n0 == self.pi_class else 0.0)


GATES = {
    # |1'1'> -> 1, |1'0> -> e^{i theta}, |00> -> e^{i(2 theta + pi)}
    "CZ": GateSpec("CZ", N=2, area=7.612, pi_class=2, theta_label="0"),
    # e^{i(3 theta + pi)}|1'1'1'>, e^{2 i theta}|1'1'0>, e^{i theta}|1'00>, |000>
    "C2Z": GateSpec("C2Z", N=3, area=10.809, pi_class=0, theta_label="1'"),
}


def _gate(gate) -> GateSpec:
    if isinstance(gate, GateSpec):
        return gate
    try:
        return GATES[str(gate).upper()]
    except KeyError:
        raise ValueError(f"unknown gate {gate!r}; expected one of {sorted(GATES)}") from None


class PulseFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PulseProfile:
    kind: str
    Omega0: float
    area: float
    delta_gl: float = 0.0
    tau: np.ndarray | None = None
    phi: np.ndarray | None = None
    gate: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("constant", "sampled"):
            raise ValueError(f"pulse kind must be 'constant' or 'sampled', got {self.kind!r}")
        if not self.area > 0:
            raise ValueError(f"pulse area must be positive, got {self.area}")
        if not self.Omega0 > 0:
            raise ValueError(f"Omega0 must be positive, got {self.Omega0}")
        if self.kind == "sampled":
            tau = np.asarray(self.tau, dtype=float)
            phi = np.asarray(self.phi, dtype=float)
            if tau.ndim != 1 or tau.shape != phi.shape or tau.size < 4:
                raise ValueError("sampled pulse needs matching 1-d tau/phi arrays with >= 4 points")
            if np.any(np.diff(tau) <= 0):
                raise ValueError("phase samples must have strictly increasing tau")
            if tau[0] != 0.0 or abs(tau[-1] - self.area) > 1e-9:
                raise ValueError(
                    f"tau samples must run from 0 to the area {self.area}, got [{tau[0]}, {tau[-1]}]")
            if np.any(np.abs(np.diff(phi)) > math.pi):
                raise ValueError("phase jumps larger than pi between adjacent samples")
            object.__setattr__(self, "tau", tau)
            object.__setattr__(self, "phi", phi)

    @property
    def duration(self) -> float:
        """Pulse length ``T = area / Omega0`` in units of ``1/g``."""
        return self.area / self.Omega0

    @cached_property
    def _spline(self):
        return CubicSpline(self.tau, self.phi)

    @cached_property
    def _dspline(self):
        return self._spline.derivative()

    def phase(self, tau):
        """``phi(tau)``; clamped to the end values outside ``[0, area]``."""
        if self.kind == "constant":
            return np.zeros_like(np.asarray(tau, dtype=float))
        return self._spline(np.clip(tau, 0.0, self.area))

    def phase_rate(self, tau):
        """``d phi / d tau``; zero outside ``[0, area]``."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(tau)
        inside = (tau >= 0.0) & (tau <= self.area)
        return np.where(inside, self._dspline(np.clip(tau, 0.0, self.area)), 0.0)

    def total_phase(self, t):
        """Drive phase ``phi(t Omega0) + delta_gl t`` at lab time ``t``."""
        return self.phase(np.asarray(t) * self.Omega0) + self.delta_gl * np.asarray(t)

    def total_phase_rate(self, t):
        return self.Omega0 * self.phase_rate(np.asarray(t) * self.Omega0) + self.delta_gl

    def omega(self, t):
        """Complex Rabi frequency ``Omega(t)``; ``|Omega(t)| = Omega0`` exactly."""
        return self.Omega0 * np.exp(1j * self.total_phase(t))

    def with_(self, **changes) -> "PulseProfile":
        return replace(self, **changes)

    def checksum(self) -> str:
        """SHA-256 over the shape-defining data (kind, area, samples)."""
        h = hashlib.sha256()
        h.update(f"{self.kind}|{self.area!r}".encode())
        if self.kind == "sampled":
            h.update(self.tau.tobytes())
            h.update(self.phi.tobytes())
        return h.hexdigest()


def constant_pulse(Omega0: float, area: float, delta_gl: float = 0.0) -> PulseProfile:
    """Flat-phase pulse, ``phi = 0``."""
    return PulseProfile("constant", Omega0=float(Omega0), area=float(area), delta_gl=float(delta_gl))


def sampled_pulse(tau, phi, Omega0: float = 1.0, delta_gl: float = 0.0, gate=None,
                  meta=None) -> PulseProfile:
    tau = np.asarray(tau, dtype=float)
    return PulseProfile("sampled", Omega0=float(Omega0), area=float(tau[-1]),
                        delta_gl=float(delta_gl), tau=tau, phi=np.asarray(phi, dtype=float),
                        gate=gate, meta=dict(meta or {}))


# --- file format ----------------------------------------------------------------

def save_pulse(pulse: PulseProfile, path, extra_header: dict | None = None) -> Path:
    """Write ``# gate:``/``# area:`` headers and ``tau phi`` rows at 17 significant digits."""
    if pulse.kind != "sampled":
        raise ValueError("only sampled pulses have a file representation")
    path = Path(path)
    lines = [f"# gate: {pulse.gate}"] if pulse.gate else []
    lines.append(f"# area: {pulse.area!r}")
    for k, v in (extra_header or {}).items():
        lines.append(f"# {k}: {v}")
    lines += [f"{t:.17g} {p:.17g}" for t, p in zip(pulse.tau, pulse.phi)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_pulse(path, Omega0: float = 1.0, delta_gl: float = 0.0) -> PulseProfile:
    """Parse a pulse file; raises :class:`PulseFileError` with the offending line number."""
    path = Path(path)
    header, tau, phi = {}, [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    header[key.strip().lower()] = value.strip()
                continue
            parts = line.split()
            if len(parts) != 2:
                raise PulseFileError(f"{path}:{lineno}: expected two columns 'tau phi', got {line!r}")
            try:
                t, p = float(parts[0]), float(parts[1])
            except ValueError:
                raise PulseFileError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
            if tau and t <= tau[-1]:
                raise PulseFileError(f"{path}:{lineno}: tau not strictly increasing ({t} after {tau[-1]})")
            tau.append(t)
            phi.append(p)
    gate = header.get("gate")
    if gate is not None and gate.upper() not in GATES:
        raise PulseFileError(f"{path}: unknown gate {gate!r}")
    if "area" not in header:
        raise PulseFileError(f"{path}: missing '# area:' header")
    try:
        area = float(header["area"])
    except ValueError:
        raise PulseFileError(f"{path}: bad area {header['area']!r}") from None
    if len(tau) < 4:
        raise PulseFileError(f"{path}: need at least 4 samples, got {len(tau)}")
    if tau[0] != 0.0:
        raise PulseFileError(f"{path}: tau must start at 0, got {tau[0]}")
    if abs(tau[-1] - area) > 1e-9:
        raise PulseFileError(f"{path}: last tau {tau[-1]} does not match area {area}")
    meta = {k: v for k, v in header.items() if k not in ("gate", "area")}
    try:
        return PulseProfile("sampled", Omega0=float(Omega0), area=area, delta_gl=float(delta_gl),
                            tau=np.array(tau), phi=np.array(phi),
                            gate=gate.upper() if gate else None, meta=meta)
    except ValueError as exc:
        raise PulseFileError(f"{path}: {exc}") from None


def builtin_pulse(gate, Omega0: float = 1.0, delta_gl: float = 0.0) -> PulseProfile:
    """Bundled time-optimal profile for ``CZ`` or ``C2Z``."""
    spec = _gate(gate)
    ref = resources.files("cavity_blockade") / "data" / f"{spec.name.lower()}.pulse"
    with resources.as_file(ref) as p:
        return load_pulse(p, Omega0=Omega0, delta_gl=delta_gl)


# --- lossless effective gate dynamics -------------------------------------------

_S3 = math.sqrt(3.0)
_A1, _A2 = (3 - 2 * _S3) / 12, (3 + 2 * _S3) / 12
_C1, _C2 = 0.5 - _S3 / 6, 0.5 + _S3 / 6


def _two_level_steps(f, n0: int, h: float):
    """``exp(-i h H)`` for ``H = f|e><e| + sqrt(n0)/2 (|e><g| + |g><e|)``, batched over ``f``."""
    c = math.sqrt(n0) / 2
    r = np.sqrt(c * c + 0.25 * f * f)
    ph = np.exp(-0.5j * f * h)
    co = np.cos(r * h)
    sinc = np.where(r > 0, np.sin(r * h) / np.where(r > 0, r, 1.0), h)
    M = np.empty(np.shape(f) + (2, 2), dtype=complex)
    M[..., 0, 0] = ph * (co + 0.5j * sinc * f)
    M[..., 1, 1] = ph * (co - 0.5j * sinc * f)
    M[..., 0, 1] = M[..., 1, 0] = ph * (-1j * sinc * c)
    return M


def _ordered_product(M):
    """``M[..., K-1] @ ... @ M[..., 0]`` over the step axis by pairwise reduction."""
    while M.shape[-3] > 1:
        if M.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(2, dtype=complex), M.shape[:-3] + (1, 2, 2))
            M = np.concatenate([M, eye], axis=-3)
        M = M[..., 1::2, :, :] @ M[..., 0::2, :, :]
    return M[..., 0, :, :]


def _knot_amplitudes(knots, area: float, n0s, nsteps: int):
    """Return-to-ground amplitudes of the lossless ``N0``-atom two-level problems.

    Phase frame with fourth-order commutator-free exponential steps; ``knots``
    may carry leading batch dimensions.
    """
    knots = np.asarray(knots, dtype=float)
    grid = np.linspace(0.0, area, knots.shape[-1])
    d = CubicSpline(grid, knots, axis=-1).derivative()
    h = area / nsteps
    t0 = np.arange(nsteps) * h
    f1, f2 = d(t0 + _C1 * h), d(t0 + _C2 * h)
    fa = 2 * (_A2 * f1 + _A1 * f2)
    fb = 2 * (_A1 * f1 + _A2 * f2)
    out = {}
    for n0 in n0s:
        M = np.stack([_two_level_steps(fa, n0, h / 2), _two_level_steps(fb, n0, h / 2)], axis=-3)
        M = M.reshape(fa.shape[:-1] + (2 * nsteps, 2, 2))
        out[n0] = _ordered_product(M)[..., 0, 0]
    return out


def gate_amplitudes(pulse: PulseProfile, gate, nsteps: int = 2000) -> dict:
    """Lossless return amplitudes ``a_N0`` (``N0 = 0..N``) of the effective gate dynamics."""
    spec = _gate(gate)
    if pulse.kind == "constant":
        knots = np.zeros(8)
        area = pulse.area
    else:
        knots, area = pulse.phi, pulse.area
        if not np.allclose(np.linspace(0, area, knots.size), pulse.tau, rtol=0, atol=1e-12):
            # non-uniform samples: resample onto a dense uniform grid
            grid = np.linspace(0, area, 4 * knots.size + 1)
            knots = pulse.phase(grid)
    amps = _knot_amplitudes(knots, area, range(1, spec.N + 1), nsteps)
    amps[0] = 1.0 + 0j
    return amps


def best_theta(gate, class_sums: dict):
    """Maximize ``|sum_N0 exp(-i xi_N0(theta)) class_sums[N0]|^2`` over ``theta``.

    ``class_sums[N0]`` is the summed overlap of the ``N0`` computational class
    with the output state (input normalization included). Dense 1024-point
    scan followed by bounded refinement; returns ``(theta, fidelity)``.
    """
    spec = _gate(gate)

    def overlap(theta):
        tot = 0.0
        for n0, c in class_sums.items():
            tot = tot + np.exp(-1j * spec.target_phase(n0, theta)) * c
        return np.abs(tot) ** 2

    grid = np.linspace(0, 2 * np.pi, 1024, endpoint=False)
    vals = overlap(grid)
    th = float(grid[np.argmax(vals)])
    step = 2 * np.pi / 1024
    res = minimize_scalar(lambda t: -overlap(t), bounds=(th - step, th + step),
                          method="bounded", options={"xatol": 1e-12})
    if -res.fun >= vals.max():
        th = float(res.x)
    return th % (2 * np.pi), float(overlap(th))


def gate_infidelity(amps: dict, gate, theta=None):
    """``1 - F`` for the uniform-superposition input given class amplitudes ``a_N0``.

    With ``theta=None`` the phase is optimized and ``(infidelity, theta)`` returned.
    """
    spec = _gate(gate)
    sums = {n0: spec.multiplicity(n0) * amps[n0] / 2 ** spec.N for n0 in range(spec.N + 1)}
    if theta is not None:
        tot = sum(np.exp(-1j * spec.target_phase(n0, theta)) * c for n0, c in sums.items())
        return 1.0 - float(np.abs(tot) ** 2)
    th, fid = best_theta(spec, sums)
    return 1.0 - fid, th


# --- synthesis ----------------------------------------------------------------------

@dataclass
class SynthesisResult:
    pulse: PulseProfile
    objective: float
    theta: float
    converged: bool
    starts: int
    history: list = field(default_factory=list)
    message: str = ""


def _residuals(x, spec: GateSpec, area: float, nsteps: int):
    knots, theta = x[..., :-1], x[..., -1]
    amps = _knot_amplitudes(knots, area, range(1, spec.N + 1), nsteps)
    parts = []
    for n0 in range(1, spec.N + 1):
        target = np.exp(1j * (spec.target_phase(n0, theta) - spec.target_phase(0, theta)))
        d = math.sqrt(spec.multiplicity(n0)) * (amps[n0] - target)
        parts += [d.real, d.imag]
    return np.stack(parts, axis=-1)


def synthesize_time_optimal(gate, area: float | None = None, segments: int = 32, starts: int = 16,
                            seed: int = 0, nsteps: int = 400, tol: float = 1e-8,
                            max_iter: int = 3000) -> SynthesisResult:
    """Optimize a cubic-spline phase profile that realizes ``gate`` at fixed ``area``.

    Multi-start quasi-Newton on the gate residuals (amplitude of each ``N0``
    class minus its target phase factor, ``theta`` free), followed by a
    least-squares polish of the best start. Non-convergence is reported through
    ``converged=False`` and a :class:`RuntimeWarning`, never silently.
    """
    spec = _gate(gate)
    area = spec.area if area is None else float(area)
    if segments < 16:
        raise ValueError("need at least 16 spline segments")
    K = segments + 1
    grid = np.linspace(0.0, area, K)
    rng = np.random.default_rng(seed)

    def cost(X):
        r = _residuals(X, spec, area, nsteps)
        return 0.5 * np.sum(r * r, axis=-1)

    def fun(x):
        return float(cost(x))

    def jac(x, eps=1e-7):
        X = np.vstack([x[None, :], x[None, :] + eps * np.eye(x.size)])
        c = cost(X)
        return (c[1:] - c[0]) / eps

    history = []
    best = None
    for s in range(starts):
        amp, w = rng.uniform(0, 3), rng.uniform(0.3, 1.5)
        ph0, slope = rng.uniform(0, 2 * np.pi), rng.uniform(-1.5, 1.5)
        x0 = np.concatenate([amp * np.cos(w * grid - ph0) + slope * grid, [rng.uniform(0, 2 * np.pi)]])
        r = minimize(fun, x0, jac=jac, method="L-BFGS-B",
                     options={"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-12})
        history.append(float(r.fun))
        log.debug("start %d: cost %.3e after %d iterations", s, r.fun, r.nit)
        if best is None or r.fun < best.fun:
            best = r
    polish = least_squares(lambda x: _residuals(x, spec, area, nsteps), best.x, method="trf",
                           xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    x = polish.x
    knots = x[:-1] - x[0]  # global phase offset is irrelevant
    tau, phi = grid, knots
    if np.any(np.abs(np.diff(phi)) > math.pi):
        # steep optimum: resample the spline finely enough to keep samples continuous
        spline = CubicSpline(grid, knots)
        for refine in (2, 4, 8, 16, 32):
            tau = np.linspace(0.0, area, segments * refine + 1)
            phi = spline(tau)
            if np.all(np.abs(np.diff(phi)) <= math.pi):
                break
    pulse = sampled_pulse(tau, phi, gate=spec.name,
                          meta={"segments": segments, "starts": starts, "seed": seed,
                                "nsteps": nsteps})
    amps = gate_amplitudes(pulse, spec, nsteps=max(nsteps, 2000))
    infid, theta = gate_infidelity(amps, spec)
    converged = bool(infid < tol)
    msg = f"{spec.name} area={area}: infidelity {infid:.3e} ({'converged' if converged else 'NOT converged'})"
    if not converged:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return SynthesisResult(pulse=pulse, objective=float(infid), theta=theta, converged=converged,
                           starts=starts, history=history, message=msg)
