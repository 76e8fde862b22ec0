"""Run configuration: YAML parsing, validation, presets and serialization.

Angular frequencies are stored in rad/s.  In a config file any of them may
instead be given in Hz through the same key with an ``_hz`` suffix
(``omega_dr_hz: 20500``).  Serialization always writes rad/s, so
``parse_config(dump_config(c)) == c``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, asdict, replace

import yaml

from .drive import NOISE_TARGETS, WAVEFORMS
from .model import SystemParams, TWO_PI

EXPERIMENTS = ("simulate", "ensemble", "tongue", "locking-curve", "detuning-map", "robustness",
               "ratio-scan", "finite-size", "momentum-dynamics", "analyze")
MODES = ("mf", "twa")
METHODS = ("rk4", "if-rk4")


class ConfigError(ValueError):
    """Invalid configuration; ``location`` is the dotted key path."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


# section -> {key: (kind, default)}; kinds: float, int, str, bool, list, angular, noise
PARAMS_SCHEMA = {
    "atom_number": ("float", 4.0e4),
    "light_shift_per_photon": ("angular", TWO_PI * 0.7),
    "cavity_decay": ("angular", TWO_PI * 3.2e3),
    "recoil_frequency": ("angular", TWO_PI * 3.7e3),
    "effective_detuning": ("angular", -TWO_PI * 7.0e3),
    "mode_cutoff": ("int", 6),
}
PROTOCOL_SCHEMA = {
    "epsilon_f": ("float", 1.7),
    "f0": ("float", 0.0),
    "omega_dr": ("angular", TWO_PI * 20.5e3),
    "waveform": ("str", "sine"),
    "drive_phase": ("float", 0.0),
    "ramp_time": ("float", 10e-3),
    "hold_time": ("float", 0.5e-3),
    "f0_ramp_time": ("float", 0.5e-3),
    "modulation_time": ("float", 10e-3),
    "noise": ("noise", []),
}
INTEGRATOR_SCHEMA = {
    "step_size": ("float", 0.5e-6),
    "sample_interval": ("float", 5e-6),
    "method": ("str", "if-rk4"),
}
ENSEMBLE_SCHEMA = {
    "n_traj": ("int", 100),
    "technical_number_std": ("float", 0.0),
    "mf_cavity_seed": ("float", 0.5),
    "tolerance": ("float", 0.5),
}
SWEEP_SCHEMA = {
    "omega_dr": ("list", None),
    "f0": ("list", None),
    "delta_eff": ("list", None),
    "epsilon_f": ("list", None),
    "waveforms": ("list", None),
    "target": ("str", None),
    "relative_strengths": ("list", None),
    "max_amplitude": ("float", None),
    "target_ratio": ("float", None),
    "atom_numbers": ("list", None),
    "coupling": ("angular", None),
    "driven_f0": ("float", None),
    "repetitions": ("int", None),
    "input": ("str", None),
}
ANGULAR_LISTS = ("omega_dr", "delta_eff")
SECTIONS = {"params": PARAMS_SCHEMA, "protocol": PROTOCOL_SCHEMA, "integrator": INTEGRATOR_SCHEMA,
            "ensemble": ENSEMBLE_SCHEMA, "sweep": SWEEP_SCHEMA}
TOP_KEYS = ("preset", "experiment", "mode", "seed", "workers", "output") + tuple(SECTIONS)


@dataclass(frozen=True)
class RunConfig:
    preset: str | None = None
    experiment: str = "simulate"
    mode: str = "mf"
    seed: int = 0
    workers: int = 1
    output: str = "out"
    params: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def system_params(self) -> SystemParams:
        return SystemParams(**self.params)

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))


def _defaults(schema):
    return {k: copy.deepcopy(v[1]) for k, v in schema.items() if v[1] is not None}


PRESETS = {
    "paper-theory": {
        "experiment": "simulate", "mode": "mf",
        "params": {"effective_detuning": -TWO_PI * 7.0e3},
        "protocol": {"epsilon_f": 1.7, "f0": 0.0, "omega_dr": TWO_PI * 20.5e3},
    },
    "paper-experiment": {
        "experiment": "simulate", "mode": "mf",
        "params": {"effective_detuning": -TWO_PI * 8.2e3},
        "protocol": {"epsilon_f": 2.0, "f0": 0.45, "omega_dr": TWO_PI * 22.5e3},
    },
    "figS5-finite-size": {
        "experiment": "finite-size", "mode": "twa",
        "protocol": {"epsilon_f": 1.7, "omega_dr": TWO_PI * 20.5e3},
        "ensemble": {"n_traj": 100},
        "sweep": {"atom_numbers": [1e3, 4e3, 16e3, 40e3], "coupling": TWO_PI * 28e3, "driven_f0": 0.15},
    },
    "figS11-longtime": {
        "experiment": "simulate", "mode": "mf",
        "protocol": {"epsilon_f": 1.7, "f0": 0.03, "omega_dr": TWO_PI * 20.5e3, "modulation_time": 100e-3},
    },
}


def _num(value, loc, kind):
    if isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot ("5e-6") as strings
        try:
            value = float(value) if kind != "int" else int(value)
        except ValueError:
            raise ConfigError(loc, f"expected a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(loc, f"expected a number, got {value!r}")
    if kind == "int":
        if int(value) != value:
            raise ConfigError(loc, f"expected an integer, got {value!r}")
        return int(value)
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(loc, "value must be finite")
    return v


def _expand_list(value, loc):
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra or not {"start", "stop", "num"} <= set(value):
            raise ConfigError(loc, "range form needs exactly start, stop, num")
        n = _num(value["num"], loc + ".num", "int")
        if n < 1:
            raise ConfigError(loc + ".num", "must be >= 1")
        a, b = _num(value["start"], loc + ".start", "float"), _num(value["stop"], loc + ".stop", "float")
        return [a + (b - a) * k / (n - 1) for k in range(n)] if n > 1 else [a]
    if not isinstance(value, (list, tuple)):
        raise ConfigError(loc, f"expected a list or range, got {value!r}")
    return list(value)


def _section(name, raw, schema, base):
    out = dict(base)
    if raw is None:
        return out
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a mapping")
    for key, value in raw.items():
        loc = f"{name}.{key}"
        hz = isinstance(key, str) and key.endswith("_hz")
        k = key[:-3] if hz else key
        if k not in schema:
            raise ConfigError(loc, "unknown key")
        kind = schema[k][0]
        if hz and not (kind == "angular" or (kind == "list" and k in ANGULAR_LISTS)):
            raise ConfigError(loc, "unknown key (no _hz form for this field)")
        if kind in ("float", "int", "angular"):
            v = _num(value, loc, "int" if kind == "int" else "float")
            out[k] = TWO_PI * v if hz else v
        elif kind == "str":
            if not isinstance(value, str):
                raise ConfigError(loc, f"expected a string, got {value!r}")
            out[k] = value
        elif kind == "list":
            vals = _expand_list(value, loc)
            if k == "waveforms":
                out[k] = [str(v) for v in vals]
            else:
                vals = [_num(v, f"{loc}[{i}]", "float") for i, v in enumerate(vals)]
                out[k] = [TWO_PI * v for v in vals] if hz else vals
        elif kind == "noise":
            out[k] = _noise(value, loc)
    return out


def _noise(value, loc):
    if not isinstance(value, list):
        raise ConfigError(loc, "expected a list of noise channels")
    chans = []
    for i, ch in enumerate(value):
        l2 = f"{loc}[{i}]"
        if not isinstance(ch, dict):
            raise ConfigError(l2, "expected a mapping")
        extra = set(ch) - {"target", "amplitude", "bandwidth"}
        if extra:
            raise ConfigError(f"{l2}.{sorted(extra)[0]}", "unknown key")
        if "target" not in ch or "amplitude" not in ch:
            raise ConfigError(l2, "missing required key 'target' or 'amplitude'")
        if ch["target"] not in NOISE_TARGETS:
            raise ConfigError(f"{l2}.target", f"must be one of {NOISE_TARGETS}")
        amp = _num(ch["amplitude"], f"{l2}.amplitude", "float")
        bw = _num(ch.get("bandwidth", 50e3), f"{l2}.bandwidth", "float")
        chans.append({"target": ch["target"], "amplitude": amp, "bandwidth": bw})
    return chans


def _validate(c: RunConfig) -> None:
    if c.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {c.experiment!r}")
    if c.mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}, got {c.mode!r}")
    if not (0 <= c.seed < 2**64):
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if c.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    p = c.params
    for k in ("atom_number", "light_shift_per_photon", "cavity_decay", "recoil_frequency"):
        if not p[k] > 0:
            raise ConfigError(f"params.{k}", "must be positive")
    if p["mode_cutoff"] < 2:
        raise ConfigError("params.mode_cutoff", "must be >= 2")
    q = c.protocol
    if q["f0"] < 0:
        raise ConfigError("protocol.f0", f"must be non-negative, got {q['f0']}")
    if q["epsilon_f"] < 0:
        raise ConfigError("protocol.epsilon_f", "must be non-negative")
    if not q["omega_dr"] > 0:
        raise ConfigError("protocol.omega_dr", "must be positive")
    if q["waveform"] not in WAVEFORMS:
        raise ConfigError("protocol.waveform", f"must be one of {WAVEFORMS}")
    for k in ("ramp_time", "hold_time", "f0_ramp_time", "modulation_time"):
        if not q[k] > 0:
            raise ConfigError(f"protocol.{k}", "must be positive")
    for i, ch in enumerate(q["noise"]):
        if ch["amplitude"] < 0:
            raise ConfigError(f"protocol.noise[{i}].amplitude", "must be non-negative")
        if not ch["bandwidth"] > 0:
            raise ConfigError(f"protocol.noise[{i}].bandwidth", "must be positive")
    g = c.integrator
    if g["method"] not in METHODS:
        raise ConfigError("integrator.method", f"must be one of {METHODS}")
    if not (g["step_size"] > 0 and g["sample_interval"] > 0):
        raise ConfigError("integrator", "step_size and sample_interval must be positive")
    e = c.ensemble
    if e["n_traj"] < 1:
        raise ConfigError("ensemble.n_traj", "must be >= 1")
    if e["technical_number_std"] < 0:
        raise ConfigError("ensemble.technical_number_std", "must be non-negative")
    s = c.sweep
    for k in ("f0", "relative_strengths"):
        if k in s and any(v < 0 for v in s[k]):
            raise ConfigError(f"sweep.{k}", "values must be non-negative")
    for k in ("waveforms",):
        for i, w in enumerate(s.get(k, [])):
            if w not in WAVEFORMS:
                raise ConfigError(f"sweep.{k}[{i}]", f"must be one of {WAVEFORMS}")
    if "target" in s and s["target"] not in NOISE_TARGETS:
        raise ConfigError("sweep.target", f"must be one of {NOISE_TARGETS}")
    if "atom_numbers" in s and any(not v > 0 for v in s["atom_numbers"]):
        raise ConfigError("sweep.atom_numbers", "values must be positive")
    if c.experiment == "analyze" and "input" not in s:
        raise ConfigError("sweep.input", "missing required key for the analyze experiment")
    if c.experiment == "robustness" and "target" not in s:
        raise ConfigError("sweep.target", "missing required key for the robustness experiment")
    if c.experiment == "ratio-scan" and "target_ratio" not in s:
        raise ConfigError("sweep.target_ratio", "missing required key for the ratio-scan experiment")


def from_mapping(doc: dict) -> RunConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a mapping at top level")
    for key in doc:
        if key not in TOP_KEYS:
            raise ConfigError(str(key), "unknown key")
    preset = doc.get("preset")
    base = {name: _defaults(schema) for name, schema in SECTIONS.items()}
    top = {"experiment": "simulate", "mode": "mf", "seed": 0, "workers": 1, "output": "out"}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        p = PRESETS[preset]
        for name in SECTIONS:
            base[name].update(copy.deepcopy(p.get(name, {})))
        for k in top:
            if k in p:
                top[k] = p[k]
    sections = {name: _section(name, doc.get(name), schema, base[name]) for name, schema in SECTIONS.items()}
    for k in ("experiment", "mode", "output"):
        if k in doc:
            if not isinstance(doc[k], str):
                raise ConfigError(k, f"expected a string, got {doc[k]!r}")
            top[k] = doc[k]
    for k in ("seed", "workers"):
        if k in doc:
            top[k] = _num(doc[k], k, "int")
    c = RunConfig(preset=preset, **top, **sections)
    _validate(c)
    return c


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(where, f"malformed YAML: {getattr(exc, 'problem', exc)}") from None
    return from_mapping(doc)


def dump_config(c: RunConfig) -> str:
    return yaml.safe_dump(c.to_dict(), sort_keys=False)


def with_overrides(c: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    out = replace(c, **kw)
    _validate(out)
    return out
