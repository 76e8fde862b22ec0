"""Parameter sweeps and named experiments built on dynamics, ensemble and spectral."""

from __future__ import annotations

import csv
import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import spectral
from .drive import NoiseChannel, standard_protocol, NOISE_TARGETS
from .dynamics import IntegratorConfig
from .ensemble import MF_CAVITY_SEED, WignerSampler, default_workers, post_select_by_phase, run_ensemble
from .model import SystemParams, TWO_PI

PARAM_KEYS = ("atom_number", "light_shift_per_photon", "cavity_decay", "recoil_frequency",
              "effective_detuning", "mode_cutoff")
PROTOCOL_KEYS = ("epsilon_f", "f0", "omega_dr", "waveform", "drive_phase", "ramp_time", "hold_time",
                 "f0_ramp_time", "modulation_time")
AXIS_ALIASES = {"delta_eff": "effective_detuning"}

# maximum noise amplitude of the robustness scan, per noise target (target units)
ROBUSTNESS_MAX = {"delta_eff": TWO_PI * 2.5e3, "epsilon_f": 0.5, "f0": None, "omega_dr": TWO_PI * 20e3}


@dataclass(frozen=True)
class CellTemplate:
    """Everything needed to run one cell apart from the swept values."""

    params: SystemParams = field(default_factory=SystemParams.theory)
    epsilon_f: float = 1.7
    f0: float = 0.0
    omega_dr: float = TWO_PI * 20.5e3
    waveform: str = "sine"
    drive_phase: float = 0.0
    ramp_time: float = 10e-3
    hold_time: float = 0.5e-3
    f0_ramp_time: float = 0.5e-3
    modulation_time: float = 10e-3
    noise_target: str | None = None
    noise_amplitude: float = 0.0
    noise_bandwidth: float = 50e3
    technical_number_std: float = 0.0
    mf_cavity_seed: float = MF_CAVITY_SEED
    search_band: tuple | None = (0.3, 0.7)   # in units of omega_dr

    def with_values(self, values: dict) -> "CellTemplate":
        pkw, tkw = {}, {}
        for k, v in values.items():
            k = AXIS_ALIASES.get(k, k)
            if k in PARAM_KEYS:
                pkw[k] = v
            elif k in {f.name for f in fields(self)}:
                tkw[k] = v
            else:
                raise KeyError(f"unknown sweep parameter {k!r}")
        out = self
        if pkw:
            out = replace(out, params=replace(out.params, **pkw))
        return replace(out, **tkw) if tkw else out

    def program(self):
        noise = ()
        if self.noise_target is not None and self.noise_amplitude > 0:
            noise = (NoiseChannel(self.noise_target, self.noise_amplitude, self.noise_bandwidth),)
        return standard_protocol(
            epsilon_f=self.epsilon_f, f0=self.f0, omega_dr=self.omega_dr, waveform=self.waveform,
            drive_phase=self.drive_phase, ramp_time=self.ramp_time, hold_time=self.hold_time,
            f0_ramp_time=self.f0_ramp_time, modulation_time=self.modulation_time, noise=noise,
        )

    def sampler(self, mode: str) -> WignerSampler:
        cav = self.mf_cavity_seed if mode == "mf" else 0.0
        return WignerSampler.condensate(self.params, self.technical_number_std, cav)

    def band(self):
        if self.search_band is None:
            return None
        return (self.search_band[0] * self.omega_dr, self.search_band[1] * self.omega_dr)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        d["search_band"] = None if self.search_band is None else list(self.search_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CellTemplate":
        d = dict(d)
        d["params"] = SystemParams(**d.get("params", {}))
        if d.get("search_band") is not None:
            d["search_band"] = tuple(d["search_band"])
        return cls(**d)


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple                      # ((name, values), ...)
    template: CellTemplate = field(default_factory=CellTemplate)
    repetitions: int = 1
    mode: str = "mf"
    master_seed: int = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig.fast)

    def __post_init__(self):
        axes = tuple((str(n), tuple(float(v) for v in vals)) for n, vals in self.axes)
        for name, vals in axes:
            if not vals:
                raise ValueError(f"axis {name!r} is empty")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"axis {name!r} has non-finite values")
            if len(vals) > 1 and not (all(b > a for a, b in zip(vals, vals[1:]))
                                      or all(b < a for a, b in zip(vals, vals[1:]))):
                raise ValueError(f"axis {name!r} values must be strictly ordered")
        object.__setattr__(self, "axes", axes)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.mode not in ("mf", "twa"):
            raise ValueError(f"mode must be 'mf' or 'twa', got {self.mode!r}")
        if self.mode == "mf" and self.repetitions != 1:
            raise ValueError("mean-field sweeps use one repetition per cell")

    @property
    def shape(self) -> tuple:
        return tuple(len(v) for _, v in self.axes)

    def cells(self):
        """(multi-index, {name: value}) for every grid cell, row-major."""
        names = [n for n, _ in self.axes]
        for idx in np.ndindex(*self.shape):
            yield idx, {n: self.axes[k][1][i] for k, (n, i) in enumerate(zip(names, idx))}

    def to_dict(self) -> dict:
        return {
            "axes": [[n, list(v)] for n, v in self.axes],
            "template": self.template.to_dict(),
            "repetitions": self.repetitions,
            "mode": self.mode,
            "master_seed": self.master_seed,
            "integrator": self.integrator.to_dict(),
        }


def cell_seed(master_seed: int, values: dict) -> int:
    """Seed of a cell derived from its coordinates, so cells are independent of the grid."""
    key = []
    for name in sorted(values):
        bits = struct.unpack("<II", struct.pack("<d", float(values[name])))
        key.extend(bits)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(key))
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass
class CellOutcome:
    values: dict
    seed: int
    s_raw: list
    ratio: list
    amplitude: list
    phase: list
    locked: list
    fallback: list
    aborted: list

    def aggregate(self) -> dict:
        def ms(x):
            x = np.asarray([v for v in x if v is not None and np.isfinite(v)], dtype=float)
            if x.size == 0:
                return None, None
            return float(x.mean()), (float(x.std(ddof=1)) if x.size > 1 else 0.0)

        s_m, s_s = ms(self.s_raw)
        r_m, r_s = ms(self.ratio)
        a_m, a_s = ms(self.amplitude)
        ph = np.asarray(self.phase, dtype=float)
        if ph.size:
            R = abs(spectral.mean_resultant(ph))
            p_m = float(np.angle(spectral.mean_resultant(ph)))
            p_s = float(math.sqrt(-2.0 * math.log(max(R, 1e-300)))) if ph.size > 1 else 0.0
        else:
            R, p_m, p_s = float("nan"), None, None
        lf = float(np.mean(self.locked)) if self.locked else None
        return {
            "values": self.values, "seed": self.seed, "n": len(self.s_raw),
            "S_raw_mean": s_m, "S_raw_std": s_s,
            "ratio_mean": r_m, "ratio_std": r_s,
            "amplitude_mean": a_m, "amplitude_std": a_s,
            "phase_mean": p_m, "phase_std": p_s, "phase_R": None if not np.isfinite(R) else float(R),
            "locked_fraction": lf,
            "classification": None if lf is None else ("locked" if lf >= 0.5 else "unlocked"),
            "fit_fallbacks": int(sum(self.fallback)),
            "aborted": self.aborted,
        }


def locked_tolerance(spec: spectral.Spectrum, omega_dr: float) -> float:
    """One spectral bin expressed as a change of omega_peak / omega_dr."""
    return spec.resolution * TWO_PI / omega_dr


def analyze_record(record, template: CellTemplate, target_ratio: float = 0.5):
    """(raw S, ratio, amplitude, phase, locked, fallback) for one record."""
    spec = spectral.compute_spectrum(record)
    s_raw = spectral.subharmonic_response(spec, template.omega_dr)
    fit = spectral.fit_dominant_peak(spec, template.band())
    ratio = fit.center / template.omega_dr
    phase = spectral.extract_phase(record, target_ratio * template.omega_dr).phase
    locked = abs(ratio - target_ratio) <= locked_tolerance(spec, template.omega_dr) + 1e-12
    return s_raw, ratio, fit.amplitude, phase, bool(locked), fit.fallback


def _run_cell(args) -> CellOutcome:
    template, values, reps, mode, master_seed, integrator, target_ratio = args
    t = template.with_values(values)
    seed = cell_seed(master_seed, values)
    ens = run_ensemble(t.sampler(mode), t.program(), integrator, t.params, reps, master_seed=seed,
                       mode=mode, workers=1)
    out = CellOutcome(values, seed, [], [], [], [], [], [], [[int(i), m] for i, m in ens.aborted])
    for rec in ens.records:
        s, r, a, p, lk, fb = analyze_record(rec, t, target_ratio)
        out.s_raw.append(s)
        out.ratio.append(r)
        out.amplitude.append(a)
        out.phase.append(p)
        out.locked.append(lk)
        out.fallback.append(fb)
    return out


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list          # aggregated dicts, row-major over spec.axes
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.normalize()

    def normalize(self):
        raw = [c["S_raw_mean"] for c in self.cells]
        vals = np.array([np.nan if v is None else v for v in raw], dtype=float)
        finite = vals[np.isfinite(vals)]
        peak = float(finite.max()) if finite.size else float("nan")
        for c in self.cells:
            if c["S_raw_mean"] is None or not peak > 0:
                c["S_rel_mean"], c["S_rel_std"] = None, None
            else:
                c["S_rel_mean"] = c["S_raw_mean"] / peak
                c["S_rel_std"] = c["S_raw_std"] / peak

    @property
    def shape(self) -> tuple:
        return self.spec.shape

    def field_array(self, name: str) -> np.ndarray:
        v = [np.nan if c.get(name) is None else float(c[name]) for c in self.cells]
        return np.array(v, dtype=float).reshape(self.shape)

    def axis(self, name: str) -> np.ndarray:
        for n, vals in self.spec.axes:
            if n == name:
                return np.array(vals)
        raise KeyError(name)

    def best_cell(self, name: str = "S_raw_mean") -> dict:
        arr = self.field_array(name).ravel()
        return self.cells[int(np.nanargmax(arr))]

    def to_ndjson(self) -> str:
        return "".join(json.dumps(c, default=_json_default) + "\n" for c in self.cells)

    def save(self, directory, fields_: Sequence[str] = ("S_rel_mean", "S_raw_mean", "ratio_mean", "ratio_std",
                                                        "amplitude_mean", "phase_mean", "locked_fraction")) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "cells.ndjson").write_text(self.to_ndjson())
        names = [n for n, _ in self.spec.axes]
        for f in fields_:
            arr = self.field_array(f)
            with open(d / f"{f}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                if arr.ndim == 1:
                    w.writerow((names[0], f))
                    for x, y in zip(self.spec.axes[0][1], arr):
                        w.writerow((repr(x), repr(float(y))))
                else:
                    a2 = arr.reshape(arr.shape[0], -1)
                    w.writerow([f"{names[0]}\\{names[1]}"] + [repr(v) for v in self.spec.axes[1][1]])
                    for x, row in zip(self.spec.axes[0][1], a2):
                        w.writerow([repr(x)] + [repr(float(v)) for v in row])
        manifest = {"version": __version__, "spec": self.spec.to_dict(), "extra": self.extra,
                    "cells": len(self.cells), "seeds": [c["seed"] for c in self.cells]}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
        return d

    @classmethod
    def load(cls, directory) -> "SweepResult":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        s = manifest["spec"]
        spec = SweepSpec(tuple((n, tuple(v)) for n, v in s["axes"]), CellTemplate.from_dict(s["template"]),
                         s["repetitions"], s["mode"], s["master_seed"], IntegratorConfig(**s["integrator"]))
        cells = [json.loads(line) for line in (d / "cells.ndjson").read_text().splitlines() if line.strip()]
        return cls(spec, cells, manifest.get("extra", {}))


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.bool_,)):
        return bool(x)
    raise TypeError(f"not serializable: {type(x)}")


def run_sweep(spec: SweepSpec, workers: int | None = None, target_ratio: float = 0.5,
              progress=None) -> SweepResult:
    """Run every cell; aggregation order is the grid order whatever the worker count."""
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(spec.template, values, spec.repetitions, spec.mode, spec.master_seed, spec.integrator, target_ratio)
             for _, values in spec.cells()]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, tasks))
    else:
        outcomes = []
        for k, t in enumerate(tasks):
            outcomes.append(_run_cell(t))
            if progress is not None:
                progress(k + 1, len(tasks))
    return SweepResult(spec, [o.aggregate() for o in outcomes])


def _reps(mode: str, repetitions: int | None) -> int:
    if repetitions is not None:
        return repetitions
    return 1 if mode == "mf" else 10


def arnold_tongue(omega_dr_values, f0_values, template: CellTemplate | None = None, mode: str = "mf",
                  repetitions: int | None = None, master_seed: int = 0,
                  integrator: IntegratorConfig | None = None, workers: int | None = None) -> SweepResult:
    """Relative subharmonic response over (omega_dr, f0)."""
    spec = SweepSpec((("omega_dr", omega_dr_values), ("f0", f0_values)), template or CellTemplate(),
                     _reps(mode, repetitions), mode, master_seed, integrator or IntegratorConfig.fast())
    return run_sweep(spec, workers)


def tongue_monotone(result: SweepResult) -> bool:
    """Is the locked classification non-decreasing in f0 along every omega_dr column."""
    names = [n for n, _ in result.spec.axes]
    lf = result.field_array("locked_fraction")
    locked = lf >= 0.5
    if names.index("f0") == 0:
        locked = locked.T
    f0 = np.array(result.spec.axes[names.index("f0")][1])
    order = np.argsort(f0)
    col = locked[:, order]
    return bool(np.all(np.diff(col.astype(int), axis=1) >= 0))


def locking_curve(f0_values, omega_dr: float, waveforms: Sequence[str] = ("sine",),
                  template: CellTemplate | None = None, mode: str = "twa", repetitions: int | None = None,
                  master_seed: int = 0, integrator: IntegratorConfig | None = None,
                  workers: int | None = None) -> dict:
    """omega_peak / omega_dr and fitted amplitude versus f0, one SweepResult per waveform."""
    base = replace(template or CellTemplate(), omega_dr=omega_dr)
    out = {}
    for wf in waveforms:
        spec = SweepSpec((("f0", f0_values),), replace(base, waveform=wf), _reps(mode, repetitions), mode,
                         master_seed, integrator or IntegratorConfig.fast())
        out[wf] = run_sweep(spec, workers)
    return out


def detuning_pump_map(delta_eff_values, epsilon_f_values, template: CellTemplate | None = None,
                      f0: float = 0.45, mode: str = "mf", repetitions: int | None = None,
                      master_seed: int = 0, integrator: IntegratorConfig | None = None,
                      workers: int | None = None):
    """S over (delta_eff, eps_f) with and without modulation.

    Returns (modulated, unmodulated); the modulated result's ``extra``
    holds the optimum cell and the raw-S enhancement there.
    """
    base = template or CellTemplate(params=SystemParams.experiment(), epsilon_f=2.0, omega_dr=TWO_PI * 22.5e3)
    axes = (("delta_eff", delta_eff_values), ("epsilon_f", epsilon_f_values))
    integ = integrator or IntegratorConfig.fast()
    reps = _reps(mode, repetitions)
    mod = run_sweep(SweepSpec(axes, replace(base, f0=f0), reps, mode, master_seed, integ), workers)
    unmod = run_sweep(SweepSpec(axes, replace(base, f0=0.0), reps, mode, master_seed, integ), workers)
    best = mod.best_cell()
    k = mod.cells.index(best)
    ref = unmod.cells[k]["S_raw_mean"]
    mod.extra["optimum"] = {"values": best["values"], "S_raw": best["S_raw_mean"], "S_raw_unmodulated": ref,
                            "enhancement": (best["S_raw_mean"] / ref) if ref else None}
    return mod, unmod


def robustness_scan(target: str, relative_strengths=(0.0, 0.25, 0.5, 0.75, 1.0), max_amplitude=None,
                    template: CellTemplate | None = None, mode: str = "mf", repetitions: int | None = None,
                    master_seed: int = 0, integrator: IntegratorConfig | None = None,
                    workers: int | None = None) -> SweepResult:
    """S versus relative white-noise strength on one pump parameter (50 kHz bandwidth)."""
    if target not in NOISE_TARGETS:
        raise ValueError(f"noise target must be one of {NOISE_TARGETS}, got {target!r}")
    base = template or CellTemplate()
    if max_amplitude is None:
        max_amplitude = ROBUSTNESS_MAX[target] if ROBUSTNESS_MAX[target] is not None else base.f0
    amps = [float(r) * max_amplitude for r in relative_strengths]
    spec = SweepSpec((("noise_amplitude", amps),), replace(base, noise_target=target), _reps(mode, repetitions),
                     mode, master_seed, integrator or IntegratorConfig.fast())
    res = run_sweep(spec, workers)
    res.extra.update(target=target, max_amplitude=max_amplitude, relative_strengths=list(map(float, relative_strengths)))
    return res


def ratio_scan(omega_dr: float, f0_values, target_ratio: float, template: CellTemplate | None = None,
               mode: str = "mf", repetitions: int | None = None, master_seed: int = 0,
               integrator: IntegratorConfig | None = None, workers: int | None = None) -> SweepResult:
    """omega_peak / omega_dr versus f0 for harmonic (ratio 1) or doubling (ratio 2) entrainment.

    The peak search band is target_ratio * omega_dr +- omega_dr / 2.
    """
    base = template or CellTemplate()
    band = (target_ratio - 0.5, target_ratio + 0.5)
    t = replace(base, omega_dr=omega_dr, search_band=band)
    spec = SweepSpec((("f0", f0_values),), t, _reps(mode, repetitions), mode, master_seed,
                     integrator or IntegratorConfig.fast())
    res = run_sweep(spec, workers, target_ratio=target_ratio)
    label = {1.0: "harmonic", 2.0: "doubling"}.get(float(target_ratio), f"ratio {target_ratio}")
    for c in res.cells:
        c["regime"] = label if c["classification"] == "locked" else "unlocked"
    res.extra.update(target_ratio=target_ratio, regime=label)
    return res


@dataclass
class FiniteSizeRow:
    atom_number: float
    driven: bool
    xi: float
    twa_peak: float
    mf_peak: float
    defined: bool
    aborted: int


def finite_size_scan(atom_numbers, coupling: float = TWO_PI * 28e3, n_traj: int = 100,
                     template: CellTemplate | None = None, driven_f0: float = 0.15,
                     omega_dr: float = TWO_PI * 20.5e3, master_seed: int = 0,
                     integrator: IntegratorConfig | None = None, workers: int | None = None) -> list:
    """Crystalline fraction versus N_a at fixed N_a U0, driven and undriven.

    Each TWA ensemble's per-trajectory power spectra are averaged and
    compared with the mean-field run at identical parameters.
    """
    base = replace(template or CellTemplate(), omega_dr=omega_dr)
    integ = integrator or IntegratorConfig.fast()
    rows = []
    for n_a in atom_numbers:
        params = replace(base.params, atom_number=float(n_a), light_shift_per_photon=coupling / float(n_a))
        for driven in (False, True):
            t = replace(base, params=params, f0=driven_f0 if driven else 0.0)
            prog = t.program()
            mf = run_ensemble(t.sampler("mf"), prog, integ, params, 1, mode="mf")
            seed = cell_seed(master_seed, {"atom_number": n_a, "f0": t.f0})
            twa = run_ensemble(t.sampler("twa"), prog, integ, params, n_traj, master_seed=seed, mode="twa",
                               workers=workers)
            xi = spectral.crystalline_fraction(twa.spectra(), mf.spectra()[0], t.band())
            rows.append(FiniteSizeRow(float(n_a), driven, xi.value, xi.twa_peak, xi.mf_peak, xi.defined,
                                      len(twa.aborted)))
    return rows


def finite_size_to_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("atom_number", "driven", "xi", "twa_peak", "mf_peak", "defined", "aborted"))
        for r in rows:
            w.writerow((r.atom_number, int(r.driven), repr(r.xi), repr(r.twa_peak), repr(r.mf_peak),
                        int(r.defined), r.aborted))


@dataclass
class MomentumPoint:
    omega_dr: float
    success: bool
    phase_np: float
    phase_n11: float
    lag: float              # phase(N_P) - phase(N11), wrapped
    occupancy: tuple
    reason: str = ""
    times: np.ndarray | None = field(default=None, repr=False)
    n_photon: np.ndarray | None = field(default=None, repr=False)
    n11: np.ndarray | None = field(default=None, repr=False)


def momentum_dynamics(omega_dr_values, template: CellTemplate | None = None, f0: float = 0.1,
                      n_traj: int = 40, master_seed: int = 0, integrator: IntegratorConfig | None = None,
                      workers: int | None = None, tolerance: float = 0.5) -> dict:
    """Branch-averaged N_P(t), N11(t) and their phases versus omega_dr.

    At each drive frequency a TWA ensemble is post-selected into its two
    branches; the branch followed is chosen by continuity of the N_P phase
    with the previous scan point.  Phases are measured at omega_dr / 2 and
    unwrapped along the scan.
    """
    base = replace(template or CellTemplate(), f0=f0)
    integ = integrator or IntegratorConfig.fast()
    points = []
    prev = None
    for w in omega_dr_values:
        t = replace(base, omega_dr=float(w))
        seed = cell_seed(master_seed, {"omega_dr": w, "f0": f0})
        ens = run_ensemble(t.sampler("twa"), t.program(), integ, t.params, n_traj, master_seed=seed,
                           mode="twa", workers=workers)
        ps = post_select_by_phase(ens, 0.5 * w, tolerance)
        if not ps.success:
            points.append(MomentumPoint(float(w), False, float("nan"), float("nan"), float("nan"), (), ps.reason))
            continue
        branch_phases = []
        for b in ps.branches:
            rec = _branch_record(ens, b)
            p_np = spectral.extract_phase(rec, 0.5 * w, observable="N_P").phase
            p_11 = spectral.extract_phase(rec, 0.5 * w, observable="N11").phase
            branch_phases.append((p_np, p_11, b, rec))
        if prev is None:
            k = int(np.argmin([abs(bp[0]) for bp in branch_phases]))
        else:
            k = int(np.argmin([abs(spectral.wrap_phase(bp[0] - prev)) for bp in branch_phases]))
        p_np, p_11, b, rec = branch_phases[k]
        prev = p_np
        points.append(MomentumPoint(float(w), True, p_np, p_11, spectral.wrap_phase(p_np - p_11), ps.occupancy,
                                    "", rec.times, rec.n_photon, rec.n11))
    ok = [p for p in points if p.success]
    if ok:
        un_np = np.unwrap([p.phase_np for p in ok])
        un_11 = un_np - np.array([p.lag for p in ok])
        for p, a, c in zip(ok, un_np, un_11):
            p.phase_np, p.phase_n11 = float(a), float(c)
    return {"points": points, "crossing": _zero_crossing(ok)}


def _branch_record(ens, branch):
    from .dynamics import TrajectoryRecord

    sub = ens.subset(branch.positions)
    r0 = sub.records[0]
    return TrajectoryRecord(r0.times, sub.mean("N_P"), sub.mean("theta"), sub.mean("bunching"), sub.mean("N11"),
                            r0.epsilon, sub.mean("norm"), None, r0.boundaries, True, None, dict(r0.meta))


def _zero_crossing(points):
    """Drive frequency where the N11 phase crosses zero (linear interpolation)."""
    for p, q in zip(points, points[1:]):
        a, b = p.phase_n11, q.phase_n11
        if a == 0:
            return p.omega_dr
        if a * b < 0:
            return p.omega_dr + (q.omega_dr - p.omega_dr) * a / (a - b)
    return None


def momentum_to_csv(result: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("omega_dr", "success", "phase_N_P", "phase_N11", "lag", "occupancy", "reason"))
        for p in result["points"]:
            w.writerow((repr(p.omega_dr), int(p.success), repr(p.phase_np), repr(p.phase_n11), repr(p.lag),
                        "/".join(f"{o:.3f}" for o in p.occupancy), p.reason))
