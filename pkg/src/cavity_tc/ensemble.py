"""Truncated-Wigner ensembles: initial sampling, batches and phase post-selection."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .drive import DriveProgram
from .dynamics import IntegratorConfig, NumericalFault, TrajectoryRecord, integrate
from .model import SystemParams, SystemState
from . import spectral

# Mean-field runs start from a slightly displaced cavity field: a = 0 with
# phi = condensate is an exact (unstable) fixed point of the deterministic
# flow, so without a seed the mean-field state never self-organizes.
MF_CAVITY_SEED = 0.5

# child streams of each trajectory's SeedSequence
STREAM_INIT, STREAM_CAVITY, STREAM_PARAMS = 0, 1, 2


@dataclass(frozen=True)
class WignerSampler:
    """Coherent-state Wigner distribution around a mean state.

    Each complex amplitude gets ``(z1 + i z2) / 2`` so ``<|d alpha|^2> = 1/2``.
    ``technical_number_std`` is the total standard deviation of the
    condensate occupation; the part beyond the coherent-state width
    ``sqrt(N_a)`` is drawn as a Gaussian rescaling of the condensate modulus.
    """

    mean_modes: np.ndarray
    mean_cavity: complex = 0j
    technical_number_std: float = 0.0
    quadrature_std: float = 0.5
    condensate_index: tuple | None = None

    def __post_init__(self):
        modes = np.asarray(self.mean_modes, dtype=np.complex128)
        if modes.ndim != 2 or modes.shape[0] != modes.shape[1] or modes.shape[0] % 2 != 1:
            raise ValueError(f"mean_modes must be a square odd-sided lattice, got {modes.shape}")
        if not np.all(np.isfinite(modes)):
            raise ValueError("mean_modes contains non-finite values")
        if self.technical_number_std < 0 or self.quadrature_std < 0:
            raise ValueError("standard deviations must be non-negative")
        object.__setattr__(self, "mean_modes", modes)
        object.__setattr__(self, "mean_cavity", complex(self.mean_cavity))
        if self.condensate_index is None:
            c = modes.shape[0] // 2
            object.__setattr__(self, "condensate_index", (c, c))

    @classmethod
    def condensate(cls, params: SystemParams, technical_number_std: float = 0.0,
                   cavity: complex = 0j) -> "WignerSampler":
        return cls(SystemState.condensate(params).mode_amplitudes, cavity, technical_number_std)

    def mean_state(self) -> SystemState:
        return SystemState(self.mean_modes.copy(), self.mean_cavity, 0.0)

    def sample(self, rng: np.random.Generator, max_redraws: int = 10000):
        """Draw one initial state; returns (state, redraws)."""
        modes = self.mean_modes.copy()
        redraws = 0
        sigma = self.technical_number_std
        if sigma > 0:
            i, j = self.condensate_index
            n_mean = abs(modes[i, j]) ** 2
            extra = math.sqrt(max(sigma * sigma - n_mean, 0.0))
            while True:
                n_new = rng.normal(n_mean, extra)
                if n_new > 0:
                    break
                redraws += 1
                if redraws > max_redraws:
                    raise ValueError(f"technical_number_std={sigma} yields no positive occupation")
            phase = modes[i, j] / abs(modes[i, j]) if modes[i, j] != 0 else 1.0
            modes[i, j] = math.sqrt(n_new) * phase
        s = self.quadrature_std
        z = rng.standard_normal((2,) + modes.shape)
        modes = modes + s * (z[0] + 1j * z[1])
        zc = rng.standard_normal(2)
        a = self.mean_cavity + s * (zc[0] + 1j * zc[1])
        return SystemState(modes, a, 0.0), redraws


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed of trajectory ``index``; identical to SeedSequence(master).spawn(n)[index]."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def sample_initial(sampler: WignerSampler, seed) -> SystemState:
    """One Wigner sample; ``seed`` is an int, SeedSequence or Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    state, _ = sampler.sample(rng)
    return state


@dataclass
class EnsembleResult:
    records: list
    indices: list
    aborted: list = field(default_factory=list)   # (index, message)
    master_seed: int | None = None
    mode: str = "twa"
    redraws: list = field(default_factory=list)
    analysis: dict = field(default_factory=dict)  # index -> dict of attachments
    manifest: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.aborted

    @property
    def times(self) -> np.ndarray:
        return self.records[0].times

    def stack(self, name: str) -> np.ndarray:
        return np.array([r.observable(name) for r in self.records])

    def mean(self, name: str) -> np.ndarray:
        return self.stack(name).mean(axis=0)

    def std(self, name: str) -> np.ndarray:
        x = self.stack(name)
        return x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1])

    def subset(self, positions) -> "EnsembleResult":
        positions = list(positions)
        return EnsembleResult([self.records[p] for p in positions], [self.indices[p] for p in positions],
                              [], self.master_seed, self.mode, [], {}, dict(self.manifest))

    def spectra(self, window=None, observable: str = "N_P", window_function: str = "rect"):
        return [spectral.compute_spectrum(r, window, observable, window_function) for r in self.records]

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = dict(self.manifest)
        manifest.update(
            version=__version__, master_seed=self.master_seed, mode=self.mode,
            indices=list(map(int, self.indices)), aborted=[[int(i), m] for i, m in self.aborted],
            redraws=list(map(int, self.redraws)),
            seeds=[_seed_repr(r.seed) for r in self.records],
        )
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
        for idx, rec in zip(self.indices, self.records):
            rec.to_csv(d / f"traj_{idx:04d}.csv")
            rec.save(d / f"traj_{idx:04d}.npz")
        if self.records:
            cols = ["t"]
            data = [self.times]
            for name in ("N_P", "N11", "B"):
                cols += [f"{name}_mean", f"{name}_std"]
                data += [self.mean(name), self.std(name)]
            with open(d / "aggregate.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for row in zip(*data):
                    w.writerow([repr(float(v)) for v in row])
        return d

    @classmethod
    def load(cls, directory) -> "EnsembleResult":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        indices = manifest["indices"]
        records = [TrajectoryRecord.load(d / f"traj_{i:04d}.npz") for i in indices]
        aborted = [tuple(x) for x in manifest.get("aborted", [])]
        return cls(records, indices, aborted, manifest.get("master_seed"), manifest.get("mode", "twa"),
                   manifest.get("redraws", []), {}, manifest)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": list(map(int, seed.spawn_key))}
    return seed


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _run_one(args):
    sampler, program, config, params, master_seed, index, mode = args
    if mode == "mf":
        state = sampler.mean_state()
        cfg = replace(config, stochastic=False)
        try:
            rec = integrate(state, program, cfg, params, twa=False, keep_final=False)
        except NumericalFault as exc:
            return index, None, 0, str(exc)
        rec.seed = None
        return index, rec, 0, None
    seq = trajectory_seed(master_seed, index)
    s_init, s_cav, s_par = seq.spawn(3)
    state, redraws = sampler.sample(np.random.default_rng(s_init))
    noise_state = program.draw_noise(np.random.default_rng(s_par))
    cfg = replace(config, stochastic=True)
    try:
        rec = integrate(state, program, cfg, params, rng=np.random.default_rng(s_cav),
                        noise_state=noise_state, twa=True, keep_final=False)
    except NumericalFault as exc:
        return index, None, redraws, str(exc)
    rec.seed = _seed_repr(seq)
    return index, rec, redraws, None


def default_workers() -> int:
    env = os.environ.get("CAVITY_TC_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"CAVITY_TC_WORKERS must be an integer, got {env!r}") from None
    return 1


def run_ensemble(sampler: WignerSampler, program: DriveProgram, config: IntegratorConfig,
                 params: SystemParams, n_traj: int, master_seed: int = 0, mode: str | None = None,
                 workers: int | None = None, first_index: int = 0) -> EnsembleResult:
    """Integrate ``n_traj`` trajectories with seeds derived from ``master_seed``.

    ``mode`` is "twa" (Wigner sampling plus cavity noise) or "mf" (the mean
    state, no noise; requires n_traj = 1).  It defaults to "mf" for a single
    noiseless trajectory and "twa" otherwise.  Results are ordered by
    trajectory index whatever the worker count.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if mode is None:
        mode = "mf" if (n_traj == 1 and not config.stochastic) else "twa"
    if mode not in ("mf", "twa"):
        raise ValueError(f"mode must be 'mf' or 'twa', got {mode!r}")
    if mode == "mf" and n_traj != 1:
        raise ValueError("mean-field mode runs exactly one trajectory")
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(sampler, program, config, params, master_seed, first_index + k, mode) for k in range(n_traj)]
    if workers > 1 and n_traj > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    else:
        outcomes = [_run_one(t) for t in tasks]
    outcomes.sort(key=lambda o: o[0])
    records, indices, aborted, redraws = [], [], [], []
    for idx, rec, nr, err in outcomes:
        redraws.append(nr)
        if err is not None:
            aborted.append((idx, err))
        else:
            records.append(rec)
            indices.append(idx)
    manifest = {
        "params": params.to_dict(), "program": program.to_dict(), "integrator": config.to_dict(),
        "sampler": {"technical_number_std": sampler.technical_number_std,
                    "quadrature_std": sampler.quadrature_std,
                    "mean_cavity": [sampler.mean_cavity.real, sampler.mean_cavity.imag]},
        "n_traj": n_traj,
    }
    return EnsembleResult(records, indices, aborted, master_seed, mode, redraws, {}, manifest)


# post-selection

@dataclass
class Branch:
    positions: list      # positions within the ensemble's record list
    center: float
    n_photon: np.ndarray
    n11: np.ndarray

    @property
    def size(self) -> int:
        return len(self.positions)


@dataclass
class PostSelection:
    success: bool
    phases: np.ndarray
    amplitudes: np.ndarray
    branches: tuple = ()
    separation: float = float("nan")
    bimodality: float = float("nan")   # |<exp(2 i phase)>|
    reason: str = ""

    @property
    def occupancy(self) -> tuple:
        n = sum(b.size for b in self.branches)
        return tuple(b.size / n for b in self.branches) if n else ()


def _circ_dist(a, b):
    return np.abs(spectral.wrap_phase(np.asarray(a) - b))


def two_means_circle(phases, max_iter: int = 100):
    """Deterministic 2-means on the circle.

    Centers start at the midpoint of the largest gap between sorted phases
    and its antipode, rotated by a quarter turn so that each initial center
    sits inside one cluster for a two-cluster configuration.
    """
    ph = np.sort(spectral.wrap_phase(np.asarray(phases, dtype=float)))
    gaps = np.diff(np.concatenate([ph, [ph[0] + 2 * math.pi]]))
    g = int(np.argmax(gaps))
    cut = ph[g] + 0.5 * gaps[g]
    # the largest gap separates the clusters; cluster centers lie a quarter turn from it
    centers = np.array([spectral.wrap_phase(cut + 0.5 * math.pi), spectral.wrap_phase(cut - 0.5 * math.pi)])
    phases = spectral.wrap_phase(np.asarray(phases, dtype=float))
    labels = None
    for _ in range(max_iter):
        d = np.stack([_circ_dist(phases, c) for c in centers])
        new = np.argmin(d, axis=0)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(2):
            if np.any(labels == k):
                centers[k] = np.angle(np.mean(np.exp(1j * phases[labels == k])))
    return labels, centers


def classify_phases(phases, tolerance: float = 0.5, min_bimodality: float = 0.5):
    """(success, labels, centers, separation, R2, reason) for a phase sample."""
    phases = np.asarray(phases, dtype=float)
    if phases.size < 2:
        return False, None, None, float("nan"), float("nan"), "fewer than two phases"
    r2 = abs(spectral.mean_resultant(phases, harmonic=2))
    labels, centers = two_means_circle(phases)
    sep = float(_circ_dist(centers[0], centers[1]))
    if r2 < min_bimodality:
        return False, labels, centers, sep, r2, f"phases not bimodal (|<exp 2i phi>| = {r2:.3f} < {min_bimodality})"
    if min(np.sum(labels == 0), np.sum(labels == 1)) == 0:
        return False, labels, centers, sep, r2, "all phases fall in one cluster"
    if abs(sep - math.pi) > tolerance:
        return False, labels, centers, sep, r2, f"cluster centers {sep:.3f} rad apart, not pi +- {tolerance}"
    return True, labels, centers, sep, r2, ""


def post_select_by_phase(ensemble: EnsembleResult, reference_frequency: float, tolerance: float = 0.5,
                         window=None, observable: str = "N_P", min_bimodality: float = 0.5) -> PostSelection:
    """Split an ensemble into the two symmetry-broken branches by oscillation phase.

    ``reference_frequency`` is an angular frequency (rad/s).  Bimodality is
    judged by the doubled-angle resultant length; a failed classification
    returns ``success=False`` with the reason and no branches.
    """
    est = [spectral.extract_phase(r, reference_frequency, window, observable) for r in ensemble.records]
    phases = np.array([e.phase for e in est])
    amps = np.array([e.amplitude for e in est])
    ok, labels, centers, sep, r2, reason = classify_phases(phases, tolerance, min_bimodality)
    if not ok:
        return PostSelection(False, phases, amps, (), sep, r2, reason)
    branches = []
    for k in range(2):
        pos = [int(p) for p in np.flatnonzero(labels == k)]
        sub = ensemble.subset(pos)
        branches.append(Branch(pos, float(centers[k]), sub.mean("N_P"), sub.mean("N11")))
    return PostSelection(True, phases, amps, tuple(branches), sep, r2, "")
