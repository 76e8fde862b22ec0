"""Fixed-step integration of the mean-field and truncated-Wigner equations.

Two drift schemes are available.  ``rk4`` is classical Runge-Kutta on the
full right-hand side; its step must resolve the highest kinetic frequency
of the lattice.  ``if-rk4`` integrates the diagonal kinetic phase exactly
(integrating factor) so the step only has to resolve the cavity and pump
time scales.  In stochastic mode an additive increment
``sqrt(kappa dt / 2) (z1 + i z2)`` is added to the cavity amplitude after
each drift step.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import __version__
from .drive import DriveProgram, NoiseState
from .model import SystemParams, SystemState

METHODS = {"rk4": K.METHOD_RK4, "if-rk4": K.METHOD_IFRK4}
CHUNK_STEPS = 1 << 15
CSV_COLUMNS = ("t", "N_P", "Theta_re", "Theta_im", "B", "N11", "epsilon")


class NumericalFault(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, time, segment, last_sample):
        self.time = time
        self.segment = segment
        self.last_sample = last_sample
        super().__init__(
            f"non-finite state at t={time:.6e} s (segment {segment}); last finite sample at t={last_sample}"
        )


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float = 20e-9
    sample_interval: float = 5e-6
    method: str = "rk4"
    stochastic: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}, got {self.method!r}")
        if not (self.step_size > 0 and self.sample_interval > 0):
            raise ValueError("step_size and sample_interval must be positive")
        ratio = self.sample_interval / self.step_size
        if abs(ratio - round(ratio)) > 1e-6 * ratio or round(ratio) < 1:
            raise ValueError(
                f"step_size {self.step_size} must divide sample_interval {self.sample_interval}"
            )

    @classmethod
    def fast(cls, **overrides) -> "IntegratorConfig":
        """Integrating-factor scheme at 0.5 us, used for ensembles and sweeps."""
        base = dict(step_size=0.5e-6, method="if-rk4")
        base.update(overrides)
        return cls(**base)

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_interval / self.step_size))

    def check_stability(self, params: SystemParams) -> None:
        """Raise if the step violates the phase-per-step bound of the scheme."""
        if self.method == "rk4":
            rate = params.max_frequency()
        else:
            rate = abs(params.bare_detuning) + params.cavity_decay + 4.0 * params.recoil_frequency
        if self.step_size * rate >= 0.1:
            raise ValueError(
                f"step_size {self.step_size:g} s too large for method {self.method}: "
                f"{self.step_size * rate:.3f} rad per step (limit 0.1)"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    n_photon: np.ndarray
    theta: np.ndarray
    bunching: np.ndarray
    n11: np.ndarray
    epsilon: np.ndarray
    norm: np.ndarray
    seed: object = None
    boundaries: tuple = ()
    twa: bool = False
    final_state: SystemState | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def sample_interval(self) -> float:
        return float(self.times[1] - self.times[0])

    def observable(self, name: str) -> np.ndarray:
        aliases = {"N_P": "n_photon", "N11": "n11", "B": "bunching", "Theta": "theta"}
        return np.asarray(getattr(self, aliases.get(name, name)))

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of samples with t0 < t <= t1."""
        eps = 1e-9 * self.sample_interval
        return (self.times > t0 + eps) & (self.times <= t1 + eps)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(self.times, self.n_photon, self.theta.real, self.theta.imag,
                       self.bunching, self.n11, self.epsilon):
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, **meta) -> "TrajectoryRecord":
        data = np.genfromtxt(path, delimiter=",", names=True)
        return cls(
            times=np.asarray(data["t"]),
            n_photon=np.asarray(data["N_P"]),
            theta=np.asarray(data["Theta_re"]) + 1j * np.asarray(data["Theta_im"]),
            bunching=np.asarray(data["B"]),
            n11=np.asarray(data["N11"]),
            epsilon=np.asarray(data["epsilon"]),
            norm=np.full(len(data), np.nan),
            **meta,
        )

    def save(self, path) -> None:
        """Binary container: arrays plus a JSON metadata header."""
        header = dict(self.meta)
        header.update(seed=_jsonable(self.seed), boundaries=list(self.boundaries), twa=self.twa,
                      version=__version__)
        np.savez(
            path,
            header=np.array(json.dumps(header)),
            times=self.times, n_photon=self.n_photon, theta=self.theta, bunching=self.bunching,
            n11=self.n11, epsilon=self.epsilon, norm=self.norm,
        )

    @classmethod
    def load(cls, path) -> "TrajectoryRecord":
        with np.load(path) as z:
            header = json.loads(str(z["header"]))
            arrays = {k: z[k] for k in ("times", "n_photon", "theta", "bunching", "n11", "epsilon", "norm")}
        seed = header.pop("seed", None)
        boundaries = tuple(header.pop("boundaries", ()))
        twa = bool(header.pop("twa", False))
        return cls(**arrays, seed=seed, boundaries=boundaries, twa=twa, meta=header)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def cavity_increments(rng: np.random.Generator, n: int, kappa: float, dt: float) -> np.ndarray:
    """n complex increments with <|dxi|^2> = kappa dt (so <xi* xi'> = kappa delta(t - t'))."""
    z = rng.standard_normal((n, 2))
    return np.sqrt(0.5 * kappa * dt) * (z[:, 0] + 1j * z[:, 1])


def _stage_arrays(program, params, noise_state, s0, n, dt):
    t = (s0 + np.arange(n)) * dt
    stages = np.stack([t, t + 0.5 * dt, t + dt], axis=1)
    eps, d_delta = program.sample(stages.ravel(), noise_state)
    eps = eps.reshape(n, 3) * params.recoil_frequency
    dc = (params.bare_detuning + d_delta).reshape(n, 3)
    return np.ascontiguousarray(eps), np.ascontiguousarray(dc)


def integrate(initial: SystemState, program: DriveProgram, config: IntegratorConfig,
              params: SystemParams, *, rng: np.random.Generator | None = None,
              noise_state: NoiseState | None = None, twa: bool | None = None,
              keep_final: bool = True) -> TrajectoryRecord:
    """Advance ``initial`` through ``program`` and sample observables.

    Samples are taken at t = 0 and then every ``config.sample_interval``.
    In stochastic mode the cavity noise is drawn from ``rng`` (default: a
    generator seeded with ``config.rng_seed``).  ``twa`` selects the
    symmetric-ordering photon-number correction and defaults to
    ``config.stochastic``.
    """
    if initial.mode_amplitudes.shape != (params.lattice_size, params.lattice_size):
        raise ValueError(
            f"initial lattice {initial.mode_amplitudes.shape} does not match mode_cutoff={params.mode_cutoff}"
        )
    if not np.all(np.isfinite(initial.mode_amplitudes)) or not np.isfinite(initial.cavity_amplitude):
        raise ValueError("initial state has non-finite amplitudes")
    config.check_stability(params)
    if twa is None:
        twa = config.stochastic
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if noise_state is None:
        noise_state = program.draw_noise(rng) if program.noise else NoiseState.empty()

    dt = config.step_size
    every = config.steps_per_sample
    n_total = int(round(program.duration / dt))
    if abs(n_total * dt - program.duration) > 1e-6 * dt * max(n_total, 1):
        raise ValueError(f"step_size {dt} does not divide program duration {program.duration}")
    n_samples = n_total // every

    L = params.lattice_size
    P = np.zeros((L + 2 * K.PAD, L + 2 * K.PAD), dtype=np.complex128)
    P[K.PAD:K.PAD + L, K.PAD:K.PAD + L] = initial.mode_amplitudes
    kin_full = np.zeros(P.shape)
    kin_full[K.PAD:K.PAD + L, K.PAD:K.PAD + L] = params.kinetic_frequencies()
    method = METHODS[config.method]
    if method == K.METHOD_IFRK4:
        kin = np.zeros(P.shape)
        eh = np.exp(-0.5j * dt * kin_full)
        ef = np.exp(-1j * dt * kin_full)
    else:
        kin = kin_full
        eh = ef = np.ones(P.shape, dtype=np.complex128)

    obs = np.empty((n_samples + 1, K.N_OBS))
    K.observe(P, complex(initial.cavity_amplitude), obs[0])
    a = complex(initial.cavity_amplitude)
    chunk = max(every, (CHUNK_STEPS // every) * every)
    zeros = np.zeros(chunk, dtype=np.complex128)
    s0 = 0
    row = 1
    while s0 < n_total:
        n = min(chunk, n_total - s0)
        eps3, dc3 = _stage_arrays(program, params, noise_state, s0, n, dt)
        if config.stochastic:
            noise = cavity_increments(rng, n, params.cavity_decay, dt)
        else:
            noise = zeros[:n]
        nrows = n // every
        a, done = K.advance(P, a, eps3, dc3, noise, kin, eh, ef, params.light_shift_per_photon,
                            params.cavity_decay, dt, every, method, obs[row:row + nrows])
        if done < n:
            t_fail = (s0 + done + 1) * dt
            last = (row - 1 + done // every) * config.sample_interval
            raise NumericalFault(t_fail, int(program.segment_index(min(t_fail, program.duration))), last)
        s0 += n
        row += nrows

    times = np.arange(n_samples + 1) * config.sample_interval
    eps_samples, _ = program.sample(np.minimum(times, program.duration), noise_state)
    n_p = obs[:, K.OBS_ABS_A2] - (0.5 if twa else 0.0)
    final = None
    if keep_final:
        final = SystemState(P[K.PAD:K.PAD + L, K.PAD:K.PAD + L].copy(), a, n_total * dt)
    return TrajectoryRecord(
        times=times,
        n_photon=n_p,
        theta=obs[:, K.OBS_THETA_RE] + 1j * obs[:, K.OBS_THETA_IM],
        bunching=obs[:, K.OBS_BUNCHING].copy(),
        n11=obs[:, K.OBS_N11].copy(),
        epsilon=eps_samples,
        norm=obs[:, K.OBS_NORM].copy(),
        seed=config.rng_seed,
        boundaries=tuple(float(b) for b in program.boundaries),
        twa=bool(twa),
        final_state=final,
        meta={
            "analysis_window": None if program.analysis_window is None else list(program.analysis_window),
            "params": params.to_dict(),
            "integrator": config.to_dict(),
            "program": program.to_dict(),
        },
    )
