"""Command-line front end: ``cavity-tc <experiment> [options]``.

Exit status: 0 success, 2 configuration error, 3 numerical fault,
4 ensemble finished with aborted trajectories (completed ones are saved).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import spectral
from .config import EXPERIMENTS, ConfigError, RunConfig, dump_config, from_mapping, parse_config, with_overrides
from .drive import NoiseChannel, standard_protocol
from .dynamics import IntegratorConfig, NumericalFault, TrajectoryRecord
from .ensemble import EnsembleResult, WignerSampler, post_select_by_phase, run_ensemble
from . import experiments as ex
from .model import TWO_PI

log = logging.getLogger("cavity_tc")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_PARTIAL = 0, 2, 3, 4


class RunFault(RuntimeError):
    """A single-trajectory run hit a numerical fault."""


class Progress:
    """Rate-limited progress lines on stderr."""

    def __init__(self, label: str, interval: float = 2.0):
        self.label = label
        self.interval = interval
        self._last = 0.0

    def __call__(self, done: int, total: int):
        now = time.monotonic()
        if done == total or now - self._last >= self.interval:
            self._last = now
            log.info("%s: %d/%d", self.label, done, total)


def template_from(cfg: RunConfig) -> ex.CellTemplate:
    q = cfg.protocol
    noise = q.get("noise", [])
    t = ex.CellTemplate(
        params=cfg.system_params(),
        epsilon_f=q["epsilon_f"], f0=q["f0"], omega_dr=q["omega_dr"], waveform=q["waveform"],
        drive_phase=q["drive_phase"], ramp_time=q["ramp_time"], hold_time=q["hold_time"],
        f0_ramp_time=q["f0_ramp_time"], modulation_time=q["modulation_time"],
        technical_number_std=cfg.ensemble["technical_number_std"],
        mf_cavity_seed=cfg.ensemble["mf_cavity_seed"],
    )
    if len(noise) == 1:
        ch = noise[0]
        t = replace(t, noise_target=ch["target"], noise_amplitude=ch["amplitude"], noise_bandwidth=ch["bandwidth"])
    return t


def program_from(cfg: RunConfig):
    q = cfg.protocol
    return standard_protocol(
        epsilon_f=q["epsilon_f"], f0=q["f0"], omega_dr=q["omega_dr"], waveform=q["waveform"],
        drive_phase=q["drive_phase"], ramp_time=q["ramp_time"], hold_time=q["hold_time"],
        f0_ramp_time=q["f0_ramp_time"], modulation_time=q["modulation_time"],
        noise=[NoiseChannel(**c) for c in q.get("noise", [])],
    )


def integrator_from(cfg: RunConfig) -> IntegratorConfig:
    g = cfg.integrator
    return IntegratorConfig(step_size=g["step_size"], sample_interval=g["sample_interval"], method=g["method"],
                            rng_seed=cfg.seed)


def write_manifest(out: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    manifest = {"version": __version__, "experiment": cfg.experiment, "seed": cfg.seed,
                "config": cfg.to_dict(), **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _summary(out: Path, lines) -> None:
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)


def record_report(rec, omega_dr: float, band=None) -> tuple[dict, spectral.Spectrum]:
    """Spectral summary of one record over its analysis window."""
    spec = spectral.compute_spectrum(rec)
    fit = spectral.fit_dominant_peak(spec, band)
    report = {
        "peak_hz": fit.frequency_hz,
        "peak_amplitude": fit.amplitude,
        "peak_fit_fallback": fit.fallback,
        "ratio": fit.center / omega_dr,
        "S_raw": spectral.subharmonic_response(spec, omega_dr),
        "phase_at_half_drive": spectral.extract_phase(rec, 0.5 * omega_dr).phase,
    }
    sb = spectral.detect_sidebands(spec, fit.center, omega_dr, orders=(1, 2))
    report["classification"] = sb.classification
    report["sidebands"] = [s.__dict__ for s in sb.sidebands]
    return report, spec


def analysis_files(out: Path, rec, omega_dr: float, band=None, stem: str = "") -> dict:
    report, spec = record_report(rec, omega_dr, band)
    spec.to_csv(out / f"{stem}spectrum.csv")
    (out / f"{stem}analysis.json").write_text(json.dumps(report, indent=2, default=_json_default))
    return report


def run_simulate(cfg: RunConfig, out: Path) -> int:
    params = cfg.system_params()
    program = program_from(cfg)
    integ = integrator_from(cfg)
    sampler = WignerSampler.condensate(params, cfg.ensemble["technical_number_std"],
                                       cfg.ensemble["mf_cavity_seed"] if cfg.mode == "mf" else 0.0)
    ens = run_ensemble(sampler, program, integ, params, 1, master_seed=cfg.seed, mode=cfg.mode)
    if ens.aborted:
        raise RunFault(ens.aborted[0][1])
    rec = ens.records[0]
    write_manifest(out, cfg, {"program": program.to_dict()})
    rec.to_csv(out / "trace.csv")
    rec.save(out / "trace.npz")
    report = analysis_files(out, rec, program.omega_dr)
    fig = _plot(lambda p: p.plot_trace(rec, out / "trace.png", spectral.compute_spectrum(rec)))
    _summary(out, [
        f"simulate ({cfg.mode}), {len(rec.times)} samples over {rec.times[-1] * 1e3:.1f} ms",
        f"dominant peak {report['peak_hz']:.1f} Hz (omega/omega_dr = {report['ratio']:.4f})",
        f"raw S = {report['S_raw']:.4g}; spectrum {report['classification']}",
        f"phase at omega_dr/2: {report['phase_at_half_drive']:.3f} rad",
    ] + fig)
    return EXIT_OK


def _plot(fn) -> list:
    """Render one figure; plotting problems never fail a run."""
    from . import plotting

    try:
        path = fn(plotting)
        return [f"figure: {path}"]
    except Exception as exc:  # pragma: no cover - backend specific
        log.warning("figure skipped: %s", exc)
        return []


def run_ensemble_cmd(cfg: RunConfig, out: Path) -> int:
    params = cfg.system_params()
    program = program_from(cfg)
    integ = integrator_from(cfg)
    n = cfg.ensemble["n_traj"] if cfg.mode == "twa" else 1
    sampler = WignerSampler.condensate(params, cfg.ensemble["technical_number_std"],
                                       cfg.ensemble["mf_cavity_seed"] if cfg.mode == "mf" else 0.0)
    ens = run_ensemble(sampler, program, integ, params, n, master_seed=cfg.seed, mode=cfg.mode, workers=cfg.workers)
    write_manifest(out, cfg, {"program": program.to_dict(), "aborted": ens.aborted})
    ens.save(out / "ensemble")
    lines = [f"ensemble ({cfg.mode}): {len(ens.records)} completed, {len(ens.aborted)} aborted"]
    if ens.records:
        w_ref = 0.5 * program.omega_dr
        ps = post_select_by_phase(ens, w_ref, cfg.ensemble["tolerance"])
        spectral.phases_to_csv(ps.phases, ps.amplitudes, out / "phases.csv")
        edges, counts = spectral.phase_histogram(ps.phases)
        spectral.histogram_to_csv(edges, counts, out / "phase_histogram.csv")
        ray = spectral.rayleigh_test(ps.phases) if len(ps.phases) > 1 else None
        post = {"success": ps.success, "reason": ps.reason, "separation": ps.separation,
                "bimodality": ps.bimodality, "occupancy": ps.occupancy,
                "centers": [b.center for b in ps.branches],
                "rayleigh_p": None if ray is None else ray.p_value}
        (out / "post_selection.json").write_text(json.dumps(post, indent=2, default=_json_default))
        lines.append(f"post-selection: {'two branches' if ps.success else 'failed'} {ps.reason}".rstrip())
        if ps.success:
            lines.append(f"centers {ps.separation:.3f} rad apart, occupancy "
                         + "/".join(f"{o:.2f}" for o in ps.occupancy))
            lines += _plot(lambda p: p.plot_branches(ens.times, ps.branches, out / "branches.png"))
        if ray is not None:
            lines.append(f"Rayleigh p = {ray.p_value:.3g}")
        labels = None
        lines += _plot(lambda p: p.plot_phases(ps.phases, ps.amplitudes, out / "phases.png", labels))
    _summary(out, lines)
    return EXIT_PARTIAL if ens.aborted else EXIT_OK


def _sweep_values(cfg, key, default):
    v = cfg.sweep.get(key)
    return default if v is None else v


def _reps(cfg):
    if cfg.mode == "mf":
        return 1
    return cfg.sweep.get("repetitions", 10)


def _sweep_partial(results) -> bool:
    return any(c.get("aborted") for r in results for c in r.cells)


def run_tongue(cfg, out):
    t = template_from(cfg)
    w = _sweep_values(cfg, "omega_dr", list(TWO_PI * np.linspace(18.5e3, 22.5e3, 15)))
    f0 = _sweep_values(cfg, "f0", list(np.linspace(0.0, 0.34, 18)))
    spec = ex.SweepSpec((("omega_dr", w), ("f0", f0)), t, _reps(cfg), cfg.mode, cfg.seed, integrator_from(cfg))
    res = ex.run_sweep(spec, cfg.workers, progress=Progress("tongue"))
    write_manifest(out, cfg)
    res.save(out / "tongue")
    lines = [f"tongue: {len(res.cells)} cells", f"locked region monotone in f0: {ex.tongue_monotone(res)}"]
    best = res.best_cell()
    lines.append(f"max S at omega_dr = {best['values']['omega_dr'] / TWO_PI:.1f} Hz, f0 = {best['values']['f0']:.3f}")
    lines += _plot(lambda p: p.plot_map(res, "S_rel_mean", out / "tongue.png", "relative S"))
    _summary(out, lines)
    return EXIT_PARTIAL if _sweep_partial([res]) else EXIT_OK


def run_locking(cfg, out):
    t = template_from(cfg)
    f0 = _sweep_values(cfg, "f0", [0.0, 0.05, 0.1, 0.2, 0.3, 0.4])
    wfs = _sweep_values(cfg, "waveforms", ["sine"])
    res = ex.locking_curve(f0, t.omega_dr, wfs, t, cfg.mode, _reps(cfg), cfg.seed, integrator_from(cfg), cfg.workers)
    write_manifest(out, cfg)
    lines = ["locking curve: omega_peak/omega_dr mean (std)"]
    for wf, r in res.items():
        r.save(out / f"locking_{wf}")
        lines.append(f"  {wf}: " + ", ".join(f"{c['values']['f0']:.2f}:{c['ratio_mean']:.4f}({c['ratio_std']:.4f})"
                                              for c in r.cells))
    lines += _plot(lambda p: p.plot_curves(
        f0, {wf: r.field_array("ratio_mean") for wf, r in res.items()}, out / "locking.png", "f0",
        "omega_peak/omega_dr", {wf: r.field_array("ratio_std") for wf, r in res.items()}))
    _summary(out, lines)
    return EXIT_PARTIAL if _sweep_partial(res.values()) else EXIT_OK


def run_detuning(cfg, out):
    t = template_from(cfg)
    de = _sweep_values(cfg, "delta_eff", list(-TWO_PI * np.linspace(2e3, 12e3, 6)))
    ef = _sweep_values(cfg, "epsilon_f", list(np.linspace(1.0, 3.0, 6)))
    mod, unmod = ex.detuning_pump_map(de, ef, t, t.f0 if t.f0 > 0 else 0.45, cfg.mode, _reps(cfg), cfg.seed,
                                      integrator_from(cfg), cfg.workers)
    write_manifest(out, cfg)
    mod.save(out / "modulated")
    unmod.save(out / "unmodulated")
    o = mod.extra["optimum"]
    lines = [f"detuning map: optimum delta_eff = {o['values']['delta_eff'] / TWO_PI:.1f} Hz, "
             f"eps_f = {o['values']['epsilon_f']:.3f}",
             f"raw S enhancement at optimum: {o['enhancement']}"]
    lines += _plot(lambda p: p.plot_map(mod, "S_rel_mean", out / "modulated.png", "S (modulated)"))
    lines += _plot(lambda p: p.plot_map(unmod, "S_rel_mean", out / "unmodulated.png", "S (unmodulated)"))
    _summary(out, lines)
    return EXIT_PARTIAL if _sweep_partial([mod, unmod]) else EXIT_OK


def run_robustness(cfg, out):
    t = template_from(cfg)
    rel = _sweep_values(cfg, "relative_strengths", [0.0, 0.25, 0.5, 0.75, 1.0])
    res = ex.robustness_scan(cfg.sweep["target"], rel, cfg.sweep.get("max_amplitude"), t, cfg.mode, _reps(cfg),
                             cfg.seed, integrator_from(cfg), cfg.workers)
    write_manifest(out, cfg)
    res.save(out / "robustness")
    lines = [f"robustness ({cfg.sweep['target']}): raw S " +
             ", ".join(f"{r:.2f}:{c['S_raw_mean']:.4g}" for r, c in zip(rel, res.cells))]
    lines += _plot(lambda p: p.plot_map(res, "S_raw_mean", out / "robustness.png", cfg.sweep["target"]))
    _summary(out, lines)
    return EXIT_PARTIAL if _sweep_partial([res]) else EXIT_OK


def run_ratio(cfg, out):
    t = template_from(cfg)
    f0 = _sweep_values(cfg, "f0", [0.0, 0.1, 0.2, 0.3])
    res = ex.ratio_scan(t.omega_dr, f0, cfg.sweep["target_ratio"], t, cfg.mode, _reps(cfg), cfg.seed,
                        integrator_from(cfg), cfg.workers)
    write_manifest(out, cfg)
    res.save(out / "ratio_scan")
    lines = ["ratio scan: " + ", ".join(f"{c['values']['f0']:.2f}:{c['ratio_mean']:.4f} {c['regime']}"
                                          for c in res.cells)]
    lines += _plot(lambda p: p.plot_map(res, "ratio_mean", out / "ratio_scan.png", "omega_peak/omega_dr"))
    _summary(out, lines)
    return EXIT_PARTIAL if _sweep_partial([res]) else EXIT_OK


def run_finite_size(cfg, out):
    t = template_from(cfg)
    rows = ex.finite_size_scan(_sweep_values(cfg, "atom_numbers", [1e3, 4e3, 16e3, 40e3]),
                               cfg.sweep.get("coupling", TWO_PI * 28e3), cfg.ensemble["n_traj"], t,
                               cfg.sweep.get("driven_f0", 0.15), t.omega_dr, cfg.seed, integrator_from(cfg),
                               cfg.workers)
    write_manifest(out, cfg)
    ex.finite_size_to_csv(rows, out / "finite_size.csv")
    lines = ["finite size: N_a, Xi(undriven), Xi(driven)"]
    na = sorted({r.atom_number for r in rows})
    for n in na:
        u = [r.xi for r in rows if r.atom_number == n and not r.driven][0]
        d = [r.xi for r in rows if r.atom_number == n and r.driven][0]
        lines.append(f"  {n:.0f}: {u:.3f}, {d:.3f}")
    lines += _plot(lambda p: p.plot_curves(
        na, {"undriven": [r.xi for r in rows if not r.driven], "driven": [r.xi for r in rows if r.driven]},
        out / "finite_size.png", "N_a", "Xi"))
    _summary(out, lines)
    return EXIT_PARTIAL if any(r.aborted for r in rows) else EXIT_OK


def run_momentum(cfg, out):
    t = template_from(cfg)
    w = _sweep_values(cfg, "omega_dr", list(TWO_PI * np.linspace(19.9e3, 20.6e3, 8)))
    f0 = t.f0 if t.f0 > 0 else 0.3
    res = ex.momentum_dynamics(w, t, f0, cfg.ensemble["n_traj"], cfg.seed, integrator_from(cfg), cfg.workers,
                               cfg.ensemble["tolerance"])
    write_manifest(out, cfg)
    ex.momentum_to_csv(res, out / "phase_lag.csv")
    for k, p in enumerate(res["points"]):
        if p.success:
            np.savetxt(out / f"branch_{k:02d}.csv", np.column_stack([p.times, p.n_photon, p.n11]), delimiter=",",
                       header="t,N_P,N11", comments="")
    ok = [p for p in res["points"] if p.success]
    cross = res["crossing"]
    lines = [f"momentum dynamics: {len(ok)}/{len(res['points'])} points post-selected",
             "N11 phase crosses 0 at " + ("-" if cross is None else f"{cross / TWO_PI:.1f} Hz")]
    if ok:
        lines += _plot(lambda p: p.plot_curves(
            [q.omega_dr / TWO_PI for q in ok], {"N_P": [q.phase_np for q in ok], "N11": [q.phase_n11 for q in ok]},
            out / "phase_lag.png", "omega_dr / 2pi (Hz)", "phase (rad)"))
    _summary(out, lines)
    return EXIT_OK


def run_analyze(cfg, out):
    src = Path(cfg.sweep["input"])
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    if src.is_dir() and (src / "manifest.json").exists() and any(src.glob("traj_*.npz")):
        ens = EnsembleResult.load(src)
        omega_dr = _omega_from(ens.records[0], cfg)
        for idx, rec in zip(ens.indices, ens.records):
            analysis_files(out, rec, omega_dr, stem=f"traj_{idx:04d}_")
        lines.append(f"analyzed {len(ens.records)} trajectories from {src}")
    else:
        path = src / "trace.npz" if src.is_dir() else src
        if path.suffix == ".npz":
            rec = TrajectoryRecord.load(path)
        else:
            rec = TrajectoryRecord.from_csv(path, meta=_sibling_meta(path))
        omega_dr = _omega_from(rec, cfg)
        report = analysis_files(out, rec, omega_dr)
        lines.append(f"analyzed {path}: peak {report['peak_hz']:.1f} Hz, {report['classification']}")
    write_manifest(out, cfg)
    _summary(out, lines)
    return EXIT_OK


def _sibling_meta(path: Path) -> dict:
    """Program and analysis window from the manifest written next to a CSV trace."""
    m = path.parent / "manifest.json"
    if not m.exists():
        return {}
    prog = json.loads(m.read_text()).get("program")
    if not prog:
        return {}
    return {"program": prog, "analysis_window": prog.get("analysis_window")}


def _omega_from(rec, cfg) -> float:
    prog = rec.meta.get("program")
    if prog:
        mods = [s for s in prog["segments"] if s["kind"] == "modulate"]
        if mods:
            return float(mods[-1]["omega_dr"])
    return float(cfg.protocol["omega_dr"])


HANDLERS = {
    "simulate": run_simulate, "ensemble": run_ensemble_cmd, "tongue": run_tongue, "locking-curve": run_locking,
    "detuning-map": run_detuning, "robustness": run_robustness, "ratio-scan": run_ratio,
    "finite-size": run_finite_size, "momentum-dynamics": run_momentum, "analyze": run_analyze,
}


def dispatch(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    try:
        return HANDLERS[cfg.experiment](cfg, out)
    except (NumericalFault, RunFault) as exc:
        log.error("numerical fault: %s", exc)
        return EXIT_FAULT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cavity-tc", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("input", nargs="?", help="trace file or ensemble directory (analyze only)")
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--preset", help="named preset (paper-theory, paper-experiment, figS5-finite-size, figS11-longtime)")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--workers", type=int, help="worker processes (default $CAVITY_TC_WORKERS or 1)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--mode", choices=("mf", "twa"))
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def load_config(args) -> RunConfig:
    if args.config:
        doc_text = Path(args.config).read_text()
        cfg = parse_config(doc_text)
        if args.preset:
            import yaml

            doc = yaml.safe_load(doc_text) or {}
            doc["preset"] = args.preset
            cfg = from_mapping(doc)
    else:
        cfg = from_mapping({"preset": args.preset} if args.preset else {})
    workers = args.workers
    if workers is None and os.environ.get("CAVITY_TC_WORKERS"):
        try:
            workers = int(os.environ["CAVITY_TC_WORKERS"])
        except ValueError:
            raise ConfigError("CAVITY_TC_WORKERS", "must be an integer") from None
    sweep = {**cfg.sweep, "input": args.input} if args.input else None
    return with_overrides(cfg, experiment=args.experiment, seed=args.seed, workers=workers, output=args.out,
                          mode=args.mode, sweep=sweep)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
