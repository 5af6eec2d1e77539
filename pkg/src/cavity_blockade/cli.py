"""Command-line front end: scenario files, platform presets, sweeps and plot data.

Scenario files are TOML. All physics runs in units of the atom-cavity
coupling ``g``; physical units appear only in the platform presets.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import __version__
from .hamiltonian import PhysicalParams
from .polariton import analytic_infidelity
from .propagate import IntegrationError
from .protocols import (
    ConvergenceError,
    ProtocolResult,
    converge_in_gT,
    gate_dwell_times,
    gate_parameters,
    run_gate,
    run_w_preparation,
    scan_gT_optimum,
    w_parameters,
)
from .pulses import (
    GATES,
    PulseFileError,
    PulseProfile,
    builtin_pulse,
    gate_amplitudes,
    gate_infidelity,
    load_pulse,
    save_pulse,
    synthesize_time_optimal,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_NONCONVERGED = 0, 2, 3, 4
WORKERS_ENV = "CAVITY_BLOCKADE_WORKERS"
PROTOCOLS = ("W", "CZ", "C2Z")
SWEEP_AXES = ("C", "gT", "gamma_over_kappa", "N")
TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field path."""


def fmt(x) -> str:
    """17-significant-digit, locale-free number formatting for CSV output."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


# --- platform presets -----------------------------------------------------------------

@dataclass(frozen=True)
class PlatformPreset:
    """Physical platform; rates are angular frequencies in rad/s."""

    name: str
    g: float
    kappa: float
    gamma: float
    gamma1: float = 0.0
    Delta: float | None = None
    W_gT: float | str = "optimum"
    W_gT_range: tuple[float, float] = (200.0, 5000.0)
    gate_gT: dict = field(default_factory=dict)
    description: str = ""

    @property
    def cooperativity(self) -> float:
        return self.g ** 2 / (self.kappa * self.gamma)

    def to_g_units(self) -> dict:
        out = {"kappa": self.kappa / self.g, "gamma": self.gamma / self.g, "gamma1": self.gamma1 / self.g}
        if self.Delta is not None:
            out["Delta"] = self.Delta / self.g
        return out

    @classmethod
    def from_g_units(cls, template: "PlatformPreset", g: float, values: dict) -> "PlatformPreset":
        """Inverse of :meth:`to_g_units` for a given coupling ``g`` in rad/s."""
        phys = {k: v * g for k, v in values.items()}
        return replace(template, g=g, **phys)


PRESETS = {
    p.name: p for p in (
        PlatformPreset("rb_fiber_cavity", g=TWO_PI * 400e6, kappa=TWO_PI * 20e6, gamma=TWO_PI * 6e6,
                       W_gT=1e4, gate_gT={"CZ": 1e4, "C2Z": 1e4},
                       description="87Rb in a fiber Fabry-Perot cavity (D2 line)"),
        PlatformPreset("rydberg_microwave", g=TWO_PI * 4e6, kappa=TWO_PI * 17.0, gamma=1 / 820e-6,
                       gamma1=1 / 2e-3, W_gT="optimum", W_gT_range=(200.0, 5000.0),
                       gate_gT={"CZ": 280.0, "C2Z": 530.0},
                       description="Cs Rydberg transition coupled to an on-chip microwave resonator"),
        PlatformPreset("caf_stripline", g=TWO_PI * 10e3, kappa=TWO_PI * 70.0, gamma=TWO_PI * 1e-2,
                       Delta=TWO_PI * 50e3, W_gT=1e4,
                       description="CaF molecules coupled to a superconducting stripline cavity"),
    )
}


# --- scenario configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    protocol: str
    N: int
    C: float | None = None
    gamma_over_kappa: float | None = None
    kappa: float | None = None
    gamma: float | None = None
    gamma1: float = 0.0
    gT: float | str = "auto"
    gT_start: float = 1000.0
    gT_range: tuple[float, float] | None = None
    m_max: int | str = "adaptive"
    model: str = "full"
    pulse: str = "builtin"
    tol: float = 1e-10
    n_samples: int = 1000
    preset: str | None = None
    overrides: dict = field(default_factory=dict)
    output_dir: str = "results"
    output_stem: str | None = None
    output_format: str = "json+csv"

    @property
    def stem(self) -> str:
        return self.output_stem or f"{self.protocol.lower()}_N{self.N}"

    def rates(self) -> tuple[float, float]:
        if self.kappa is not None:
            return self.kappa, self.gamma
        kappa = 1 / math.sqrt(self.C * self.gamma_over_kappa)
        return kappa, self.gamma_over_kappa * kappa

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["gT_range"] = list(self.gT_range) if self.gT_range else None
        return d


_OVERRIDES = ("Delta", "eta", "Omega0", "delta_gl", "eta2_over_Omega0")
_TOP_KEYS = {f.name for f in fields(ScenarioConfig)} - {"overrides", "output_dir", "output_stem",
                                                         "output_format"}


def _number(value, path: str, positive: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(f"{path}: expected a positive finite number, got {value!r}")
    return float(value)


def parse_config(data: dict) -> ScenarioConfig:
    """Validate a parsed TOML mapping into a :class:`ScenarioConfig`."""
    data = dict(data)
    overrides = data.pop("overrides", {}) or {}
    output = data.pop("output", {}) or {}
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    if "protocol" not in data:
        raise ConfigError("protocol: missing")
    protocol = str(data["protocol"]).upper()
    if protocol not in PROTOCOLS:
        raise ConfigError(f"protocol: must be one of {PROTOCOLS}, got {data['protocol']!r}")
    kw: dict = {"protocol": protocol}

    preset = data.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r}; known: {sorted(PRESETS)}")
    kw["preset"] = preset

    default_N = GATES[protocol].N if protocol in GATES else None
    N = data.get("N", default_N)
    if N is None:
        raise ConfigError("N: missing (required for W)")
    if isinstance(N, bool) or not isinstance(N, int):
        raise ConfigError(f"N: expected an integer, got {N!r}")
    if protocol == "W" and N < 2:
        raise ConfigError("N: W preparation needs N >= 2")
    if protocol in GATES and N != GATES[protocol].N:
        raise ConfigError(f"N: {protocol} acts on {GATES[protocol].N} atoms, got {N}")
    kw["N"] = N

    has_C = "C" in data or "gamma_over_kappa" in data
    has_rates = "kappa" in data or "gamma" in data
    if preset is None:
        if has_C == has_rates:
            raise ConfigError("C: give exactly one of {C + gamma_over_kappa} or {kappa + gamma}")
        if has_C:
            for key in ("C", "gamma_over_kappa"):
                if key not in data:
                    raise ConfigError(f"{key}: missing (C and gamma_over_kappa go together)")
                kw[key] = _number(data[key], key)
        else:
            for key in ("kappa", "gamma"):
                if key not in data:
                    raise ConfigError(f"{key}: missing (kappa and gamma go together)")
                kw[key] = _number(data[key], key, positive=False)
            if kw["kappa"] == kw["gamma"] == 0:
                raise ConfigError("kappa: at least one of kappa, gamma must be positive")
    elif has_C or has_rates:
        raise ConfigError("preset: loss rates come from the preset; remove C/kappa/gamma")
    if "gamma1" in data:
        kw["gamma1"] = _number(data["gamma1"], "gamma1", positive=False)

    gT = data.get("gT", "auto")
    if isinstance(gT, str):
        if gT not in ("auto", "optimum"):
            raise ConfigError(f"gT: expected a number, 'auto' or 'optimum', got {gT!r}")
    else:
        gT = _number(gT, "gT")
    kw["gT"] = gT
    if "gT_start" in data:
        kw["gT_start"] = _number(data["gT_start"], "gT_start")
    if "gT_range" in data:
        rng = data["gT_range"]
        if not (isinstance(rng, list) and len(rng) == 2):
            raise ConfigError("gT_range: expected [min, max]")
        lo, hi = (_number(v, f"gT_range[{i}]") for i, v in enumerate(rng))
        if lo >= hi:
            raise ConfigError("gT_range: min must be below max")
        kw["gT_range"] = (lo, hi)

    m_max = data.get("m_max", "adaptive")
    if m_max != "adaptive" and (isinstance(m_max, bool) or not isinstance(m_max, int) or m_max < 0):
        raise ConfigError(f"m_max: expected a non-negative integer or 'adaptive', got {m_max!r}")
    kw["m_max"] = m_max

    model = data.get("model", "full")
    allowed = ("full", "effective") if protocol == "W" else ("full", "effective", "four_level")
    if model not in allowed:
        raise ConfigError(f"model: must be one of {allowed}, got {model!r}")
    kw["model"] = model

    pulse = data.get("pulse", "builtin")
    if not isinstance(pulse, str):
        raise ConfigError("pulse: expected 'builtin' or a file path")
    kw["pulse"] = pulse

    if "tol" in data:
        tol = _number(data["tol"], "tol")
        if not 1e-14 < tol < 1e-4:
            raise ConfigError(f"tol: must lie in (1e-14, 1e-4), got {tol}")
        kw["tol"] = tol
    if "n_samples" in data:
        n = data["n_samples"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 2:
            raise ConfigError(f"n_samples: expected an integer >= 2, got {n!r}")
        kw["n_samples"] = n

    bad = set(overrides) - set(_OVERRIDES)
    if bad:
        raise ConfigError(f"overrides.{sorted(bad)[0]}: unknown override")
    kw["overrides"] = {k: _number(v, f"overrides.{k}", positive=k != "delta_gl")
                       for k, v in overrides.items()}
    if "eta" in kw["overrides"] and "eta2_over_Omega0" in kw["overrides"]:
        raise ConfigError("overrides.eta: conflicts with overrides.eta2_over_Omega0")
    if "Omega0" in kw["overrides"] and gT not in ("auto", "optimum"):
        raise ConfigError("overrides.Omega0: conflicts with an explicit gT (gT fixes Omega0)")

    for key in ("dir", "stem", "format"):
        if key in output:
            kw[f"output_{key}"] = str(output[key])
    unknown = set(output) - {"dir", "stem", "format"}
    if unknown:
        raise ConfigError(f"output.{sorted(unknown)[0]}: unknown key")
    if kw.get("output_format", "json+csv") not in ("json", "json+csv"):
        raise ConfigError("output.format: must be 'json' or 'json+csv'")
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


# --- running scenarios -------------------------------------------------------------------

def _resolved_rates(cfg: ScenarioConfig) -> dict:
    if cfg.preset:
        units = PRESETS[cfg.preset].to_g_units()
        return {"kappa": units["kappa"], "gamma": units["gamma"],
                "gamma1": units["gamma1"] if cfg.gamma1 == 0 else cfg.gamma1, "Delta": units.get("Delta")}
    kappa, gamma = cfg.rates()
    return {"kappa": kappa, "gamma": gamma, "gamma1": cfg.gamma1, "Delta": None}


def _pulse_for(cfg: ScenarioConfig) -> PulseProfile | None:
    if cfg.protocol == "W":
        return None
    if cfg.pulse == "builtin":
        return builtin_pulse(cfg.protocol)
    pulse = load_pulse(cfg.pulse)
    if pulse.gate not in (None, cfg.protocol):
        raise ConfigError(f"pulse: file is for {pulse.gate}, scenario is {cfg.protocol}")
    return pulse


def _runner(cfg: ScenarioConfig, pulse: PulseProfile | None):
    """Closure ``gT -> ProtocolResult`` for the scenario."""
    rates = _resolved_rates(cfg)
    ov = cfg.overrides
    Delta = ov.get("Delta", rates["Delta"])
    m_max = 3 if cfg.m_max == "adaptive" else cfg.m_max
    adaptive = cfg.m_max == "adaptive"
    if cfg.protocol == "W":
        def run(gT):
            p = w_parameters(rates["kappa"], rates["gamma"], cfg.N, gT, Delta=Delta,
                             eta2_over_Omega0=ov.get("eta2_over_Omega0"), gamma1=rates["gamma1"])
            p = _apply_overrides(p, ov)
            return run_w_preparation(p, model=cfg.model, m_max=m_max, tol=cfg.tol,
                                     n_samples=cfg.n_samples, adaptive_truncation=adaptive)
        return run
    tau = gate_dwell_times(cfg.protocol, pulse)

    def run(gT):
        p = gate_parameters(cfg.protocol, rates["kappa"], rates["gamma"], gT, tau=tau, Delta=Delta,
                            eta2_over_Omega0=ov.get("eta2_over_Omega0"), gamma1=rates["gamma1"])
        p = _apply_overrides(p, ov)
        return run_gate(cfg.protocol, p, pulse, model=cfg.model, m_max=m_max, tol=cfg.tol,
                        n_samples=cfg.n_samples, adaptive_truncation=adaptive)
    return run


def _apply_overrides(p: PhysicalParams, ov: dict) -> PhysicalParams:
    changes = {k: ov[k] for k in ("eta", "delta_gl") if k in ov}
    return p.updated(**changes) if changes else p


def _fixed_gT(cfg: ScenarioConfig):
    if isinstance(cfg.gT, float):
        return cfg.gT
    if "Omega0" in cfg.overrides:
        area = GATES[cfg.protocol].area if cfg.protocol in GATES else math.pi / math.sqrt(cfg.N)
        return area / cfg.overrides["Omega0"]
    if cfg.preset:
        preset = PRESETS[cfg.preset]
        value = preset.W_gT if cfg.protocol == "W" else preset.gate_gT.get(cfg.protocol, "auto")
        if isinstance(value, float) and cfg.gT == "auto":
            return value
    return None


def execute(cfg: ScenarioConfig) -> tuple[ProtocolResult, dict]:
    """Run one scenario; returns the result and a description of the gT study."""
    pulse = _pulse_for(cfg)
    run = _runner(cfg, pulse)
    gT = _fixed_gT(cfg)
    if gT is not None:
        return run(gT), {"mode": "fixed", "gT": gT}
    if cfg.gT == "optimum" or (cfg.preset and cfg.protocol == "W" and PRESETS[cfg.preset].W_gT == "optimum"):
        lo, hi = cfg.gT_range or PRESETS.get(cfg.preset, PRESETS["rydberg_microwave"]).W_gT_range
        best, history = scan_gT_optimum(run, lo, hi)
        return best, {"mode": "optimum", "history": history}
    result, history = converge_in_gT(run, cfg.gT_start)
    return result, {"mode": "plateau", "history": history}


def _provenance(cfg: ScenarioConfig, result: ProtocolResult, study: dict, pulse) -> dict:
    kappa, gamma = result.params_used.kappa, result.params_used.gamma
    record = {
        "code_version": __version__,
        "config": cfg.as_dict(),
        "params": result.params_used.as_dict(),
        "cooperativity": result.params_used.cooperativity,
        "integrator": {"tol": cfg.tol, "n_samples": cfg.n_samples},
        "pulse_checksum": pulse.checksum() if pulse is not None else None,
        "gT_study": study,
        "result": {
            "protocol": result.protocol,
            "model": result.model,
            "fidelity": result.fidelity,
            "infidelity": result.infidelity,
            "theta_opt": result.theta_opt,
            "gT": result.gT,
            "budget": {"gamma_loss": result.budget.gamma_loss, "kappa_loss": result.budget.kappa_loss,
                       "gamma1_loss": result.budget.gamma1_loss, "residual": result.budget.residual,
                       "total": result.budget.total},
            "populations": result.populations,
            "details": {k: v for k, v in result.details.items() if isinstance(v, (int, float, str))},
        },
    }
    if kappa > 0 and gamma > 0:
        record["analytic_infidelity"] = analytic_infidelity(result.protocol, 1 / (kappa * gamma), N=cfg.N)
    if cfg.preset:
        preset = PRESETS[cfg.preset]
        record["preset"] = {"name": preset.name, "g_rad_per_s": preset.g,
                            "derived_C": preset.cooperativity, **preset.to_g_units()}
    return record


def timeseries_rows(result: ProtocolResult) -> tuple[list[str], list[list]]:
    """Header and rows of the time-series observables of a result."""
    if result.protocol == "W" and result.trajectory is not None:
        traj = result.trajectory
        header = ["t", "norm"] + sorted(traj.observables)
        pops = traj.populations
        labels = traj.labels
        n_top = max(s.n for s in labels) if labels and hasattr(labels[0], "n") else None
        if n_top is not None:
            dn = np.zeros((pops.shape[0], n_top + 1))
            for j, s in enumerate(labels):
                if s.b == 0:
                    dn[:, s.a] += pops[:, j]
            header += [f"P_D{n}" for n in range(n_top + 1)] + ["trace"]
            extra = np.column_stack([dn, dn.sum(axis=1)])
        else:
            header += list(labels)
            extra = pops
        rows = [[traj.times[i], traj.norms[i]] + [traj.observables[k][i] for k in sorted(traj.observables)]
                + list(extra[i]) for i in range(len(traj.times))]
        return header, rows
    trajs = result.details.get("class_trajectories")
    if trajs:
        keys = sorted({k for tr in trajs.values() for k in tr.observables})
        header = ["N0", "t", "norm"] + keys
        rows = []
        for n0, tr in sorted(trajs.items()):
            for i in range(len(tr.times)):
                rows.append([n0, tr.times[i], tr.norms[i]] + [tr.observables.get(k, np.zeros(1))[i]
                                                             if k in tr.observables else None
                                                             for k in keys])
        return header, rows
    traj = result.trajectory
    if traj is None:
        return ["t"], []
    header = ["t", "norm"] + sorted(traj.observables)
    rows = [[traj.times[i], traj.norms[i]] + [traj.observables[k][i] for k in sorted(traj.observables)]
            for i in range(len(traj.times))]
    return header, rows


def write_csv(path: Path, header, rows, meta: dict | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def run_scenario(cfg: ScenarioConfig, out_dir=None, timestamp: bool = True) -> dict:
    """Run ``cfg`` and write ``<stem>.json`` (plus ``<stem>.csv``); returns the paths."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pulse = _pulse_for(cfg)
    result, study = execute(cfg)
    record = _provenance(cfg, result, study, pulse)
    if timestamp:
        record["timestamp"] = datetime.now(timezone.utc).isoformat()
    paths = {"json": out / f"{cfg.stem}.json"}
    paths["json"].write_text(json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n",
                             encoding="utf-8")
    if cfg.output_format == "json+csv":
        header, rows = timeseries_rows(result)
        paths["csv"] = write_csv(out / f"{cfg.stem}.csv", header, rows,
                                 {"protocol": result.protocol, "model": result.model, "gT": fmt(result.gT)})
    return {k: str(v) for k, v in paths.items()}


# --- sweeps -------------------------------------------------------------------------------

SWEEP_COLUMNS = ["axis", "value", "protocol", "model", "C", "gamma_over_kappa", "N", "gT", "fidelity",
                 "infidelity", "gamma_loss", "kappa_loss", "gamma1_loss", "residual", "budget_total",
                 "theta_opt", "wall_time", "error"]


def _sweep_point(cfg: ScenarioConfig, axis: str, value) -> list:
    start = time.perf_counter()
    point = _with_axis(cfg, axis, value)
    try:
        result, _ = execute(point)
    except (IntegrationError, ConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
        row = {c: None for c in SWEEP_COLUMNS}
        row.update(axis=axis, value=value, protocol=cfg.protocol, model=cfg.model, N=point.N,
                   error=f"{type(exc).__name__}: {exc}".replace("\n", " "),
                   wall_time=time.perf_counter() - start)
        return [row[c] for c in SWEEP_COLUMNS]
    p = result.params_used
    C = p.cooperativity
    row = dict(axis=axis, value=value, protocol=result.protocol, model=result.model, C=C,
               gamma_over_kappa=p.gamma / p.kappa if p.kappa else None, N=point.N, gT=result.gT,
               fidelity=result.fidelity, infidelity=result.infidelity,
               gamma_loss=result.budget.gamma_loss, kappa_loss=result.budget.kappa_loss,
               gamma1_loss=result.budget.gamma1_loss, residual=result.budget.residual,
               budget_total=result.budget.total, theta_opt=result.theta_opt,
               wall_time=time.perf_counter() - start, error="")
    return [row[c] for c in SWEEP_COLUMNS]


def _with_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "gT":
        return replace(cfg, gT=float(value))
    if axis == "N":
        return replace(cfg, N=int(value))
    if cfg.preset is not None:
        raise ConfigError(f"axis {axis}: not available with a preset (loss rates are fixed)")
    if cfg.C is None:
        raise ConfigError(f"axis {axis}: scenario must specify C and gamma_over_kappa")
    return replace(cfg, **{axis: float(value)})


def sweep(cfg: ScenarioConfig, axis: str, values, out_path, workers: int | None = None) -> Path:
    """One CSV row per value, in input order, flushed as soon as each row is ready."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise ConfigError("values: empty")
    diffs = np.diff(np.asarray(values, dtype=float))
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ConfigError("values: must be strictly monotone")
    if axis == "N" and cfg.protocol != "W":
        raise ConfigError("axis N: only the W protocol has a free register size")
    for v in values:  # fail fast on configuration problems
        _with_axis(cfg, axis, v)
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# sweep: {axis}\n# protocol: {cfg.protocol}\n# code_version: {__version__}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        fh.flush()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = pool.map(_sweep_point, [cfg] * len(values), [axis] * len(values), values)
                for row in rows:
                    writer.writerow([fmt(x) for x in row])
                    fh.flush()
        else:
            for v in values:
                writer.writerow([fmt(x) for x in _sweep_point(cfg, axis, v)])
                fh.flush()
    return out_path


# --- plot data ----------------------------------------------------------------------------

FIGURES = {
    "fig1d": (("t", "P_D0", "P_D1", "P_D2", "trace"), "t", "population"),
    "fig1e": (("gT", "infidelity"), "gT", "infidelity"),
    "fig1f": (("C", "infidelity"), "C", "infidelity"),
    "fig2a": (("gT", "gamma_loss", "kappa_loss", "residual", "infidelity"), "gT", "error"),
    "fig2b": (("P_D0", "P_D1"), "n", "P_Dn"),
    "fig3a": (("gT", "infidelity"), "gT", "infidelity"),
    "fig3b": (("gT", "infidelity"), "gT", "infidelity"),
}


def read_table(path) -> tuple[dict, list[dict]]:
    """Read a CSV written by this tool: ``# key: value`` header lines, then a table."""
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    return meta, list(csv.DictReader(io.StringIO("".join(lines))))


def emit_plot_data(table_path, figure: str, out_path) -> Path:
    """Tidy plot-ready CSV (one observation per row) for a figure id; nothing is drawn."""
    if figure not in FIGURES:
        raise ConfigError(f"figure: unknown figure id {figure!r}; known: {sorted(FIGURES)}")
    needed, xname, yname = FIGURES[figure]
    meta, rows = read_table(table_path)
    columns = set(rows[0]) if rows else set()
    missing = [c for c in needed if c not in columns]
    if missing:
        raise ConfigError(f"{table_path}: missing columns {missing} for {figure}")
    header = ["figure", xname, "series", yname]
    out = []
    if figure == "fig2b":
        last = rows[-1]
        n = 0
        while f"P_D{n}" in last:
            out.append([figure, n, "P_Dn", float(last[f"P_D{n}"])])
            n += 1
    else:
        series = [c for c in needed if c != xname]
        for row in rows:
            if row.get("error"):
                continue
            group = "" if "gamma_over_kappa" not in row else f"gamma_over_kappa={row['gamma_over_kappa']}"
            for s in series:
                label = s if len(series) > 1 else (group or s)
                out.append([figure, float(row[xname]), label, float(row[s])])
    return write_csv(Path(out_path), header, out,
                     {"figure": figure, "x": xname, "y": yname, "source": Path(table_path).name})


# --- command line ---------------------------------------------------------------------------

def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"values: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-blockade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")

    p = sub.add_parser("sweep", help="sweep one axis of a scenario")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--out", help="output CSV path")

    p = sub.add_parser("pulse", help="synthesize or verify time-optimal pulses")
    psub = p.add_subparsers(dest="pulse_command", required=True)
    s = psub.add_parser("synth")
    s.add_argument("--gate", required=True, choices=sorted(GATES))
    s.add_argument("--area", type=float)
    s.add_argument("--segments", type=int, default=32)
    s.add_argument("--starts", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s = psub.add_parser("verify")
    s.add_argument("path", help="pulse file or 'builtin:CZ' / 'builtin:C2Z'")
    s.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("presets", help="platform presets")
    psub = p.add_subparsers(dest="presets_command", required=True)
    psub.add_parser("list")

    p = sub.add_parser("plot-data", help="plot-ready CSV for a figure id")
    p.add_argument("table")
    p.add_argument("--figure", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_pulse(args) -> int:
    if args.pulse_command == "synth":
        res = synthesize_time_optimal(args.gate, area=args.area, segments=args.segments,
                                      starts=args.starts, seed=args.seed)
        save_pulse(res.pulse, args.out, {"objective": fmt(res.objective), "seed": args.seed,
                                         "segments": args.segments})
        print(res.message)
        return EXIT_OK if res.converged else EXIT_NONCONVERGED
    if args.path.startswith("builtin:"):
        pulse = builtin_pulse(args.path.split(":", 1)[1])
    else:
        pulse = load_pulse(args.path)
    if pulse.gate is None:
        raise ConfigError(f"{args.path}: pulse file has no '# gate:' header")
    infid, theta = gate_infidelity(gate_amplitudes(pulse, pulse.gate, nsteps=4000), pulse.gate)
    print(f"{pulse.gate} area={pulse.area} lossless infidelity={infid:.3e} theta={theta:.12f} "
          f"sha256={pulse.checksum()}")
    return EXIT_OK if infid < args.tol else EXIT_NONCONVERGED


def _cmd_presets() -> int:
    print(f"{'name':20s} {'g/2pi [Hz]':>12s} {'kappa/g':>11s} {'gamma/g':>11s} {'gamma1/g':>11s} {'C':>11s}")
    for p in PRESETS.values():
        u = p.to_g_units()
        print(f"{p.name:20s} {p.g / TWO_PI:12.4g} {u['kappa']:11.4g} {u['gamma']:11.4g} "
              f"{u['gamma1']:11.4g} {p.cooperativity:11.4g}  {p.description}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            cfg = load_config(args.config)
            paths = run_scenario(cfg, args.out, timestamp=not args.no_timestamp)
            print(json.dumps(paths))
        elif args.command == "sweep":
            cfg = load_config(args.config)
            out = args.out or Path(cfg.output_dir) / f"{cfg.stem}_sweep_{args.axis}.csv"
            print(sweep(cfg, args.axis, _parse_values(args.values), out))
        elif args.command == "pulse":
            return _cmd_pulse(args)
        elif args.command == "presets":
            return _cmd_presets()
        elif args.command == "plot-data":
            print(emit_plot_data(args.table, args.figure, args.out))
        return EXIT_OK
    except (ConfigError, PulseFileError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (IntegrationError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
