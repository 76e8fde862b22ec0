"""Transversely pumped BEC in a single-mode cavity, plane-wave momentum basis.

Units: time in seconds, angular frequencies in rad/s, pump depth in recoil
units.  Mode amplitudes carry atom number (sum |phi|^2 = N_a) and the cavity
amplitude carries photon number.  The pump-cavity coupling is fixed as
``eta = sqrt(eps * omega_rec * U0)`` with ``eps`` the depth in recoil
units; this is the single place where the units convention is chosen.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

TWO_PI = 2.0 * np.pi


class NonFiniteStateError(ValueError):
    """Raised when a state carries a NaN or infinite amplitude."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite amplitude at {index}")


@dataclass(frozen=True)
class SystemParams:
    atom_number: float = 4.0e4
    light_shift_per_photon: float = TWO_PI * 0.7
    cavity_decay: float = TWO_PI * 3.2e3
    recoil_frequency: float = TWO_PI * 3.7e3
    effective_detuning: float = -TWO_PI * 7.0e3
    mode_cutoff: int = 6

    def __post_init__(self):
        if not self.atom_number > 0:
            raise ValueError(f"atom_number must be positive, got {self.atom_number}")
        for name in ("light_shift_per_photon", "recoil_frequency"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        # kappa = 0 is admitted as the conservative limit
        if not self.cavity_decay >= 0:
            raise ValueError(f"cavity_decay must be non-negative, got {self.cavity_decay}")
        if not np.isfinite(self.effective_detuning):
            raise ValueError("effective_detuning must be finite")
        if int(self.mode_cutoff) != self.mode_cutoff or self.mode_cutoff < 2:
            raise ValueError(f"mode_cutoff must be an integer >= 2, got {self.mode_cutoff}")

    @classmethod
    def theory(cls, **overrides) -> "SystemParams":
        """Parameters of the simulations (delta_eff = -2pi x 7 kHz)."""
        return cls(**overrides)

    @classmethod
    def experiment(cls, **overrides) -> "SystemParams":
        """Parameters of the main-text measurements (delta_eff = -2pi x 8.2 kHz)."""
        base = dict(effective_detuning=-TWO_PI * 8.2e3)
        base.update(overrides)
        return cls(**base)

    @property
    def collective_light_shift(self) -> float:
        return 0.5 * self.atom_number * self.light_shift_per_photon

    @property
    def bare_detuning(self) -> float:
        """delta_c = delta_eff + N_a U0 / 2."""
        return self.effective_detuning + self.collective_light_shift

    @property
    def lattice_size(self) -> int:
        return 2 * self.mode_cutoff + 1

    def kinetic_frequencies(self) -> np.ndarray:
        n = np.arange(-self.mode_cutoff, self.mode_cutoff + 1)
        return self.recoil_frequency * (n[:, None] ** 2 + n[None, :] ** 2)

    def max_frequency(self) -> float:
        return 2.0 * self.recoil_frequency * self.mode_cutoff**2 + abs(self.bare_detuning)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PumpValue:
    epsilon: float  # depth in units of E_rec
    eta: float      # rad/s

    @classmethod
    def from_depth(cls, epsilon: float, params: SystemParams) -> "PumpValue":
        # negative intensities are unphysical; a modulated depth is clipped at zero
        depth = max(float(epsilon), 0.0)
        return cls(float(epsilon), float(np.sqrt(depth * params.recoil_frequency * params.light_shift_per_photon)))

    def depth_rate(self, params: SystemParams) -> float:
        """Lattice depth eps/hbar in rad/s."""
        return max(self.epsilon, 0.0) * params.recoil_frequency


@dataclass
class SystemState:
    mode_amplitudes: np.ndarray
    cavity_amplitude: complex = 0j
    time: float = 0.0

    def __post_init__(self):
        self.mode_amplitudes = np.asarray(self.mode_amplitudes, dtype=np.complex128)
        if self.mode_amplitudes.ndim != 2 or self.mode_amplitudes.shape[0] != self.mode_amplitudes.shape[1]:
            raise ValueError(f"mode lattice must be square, got shape {self.mode_amplitudes.shape}")
        if self.mode_amplitudes.shape[0] % 2 != 1:
            raise ValueError("mode lattice must have odd side length 2*n_max+1")
        self.cavity_amplitude = complex(self.cavity_amplitude)

    @property
    def mode_cutoff(self) -> int:
        return self.mode_amplitudes.shape[0] // 2

    def mode(self, n: int, m: int) -> complex:
        c = self.mode_cutoff
        if abs(n) > c or abs(m) > c:
            return 0j
        return complex(self.mode_amplitudes[n + c, m + c])

    def copy(self) -> "SystemState":
        return SystemState(self.mode_amplitudes.copy(), self.cavity_amplitude, self.time)

    @classmethod
    def condensate(cls, params: SystemParams, cavity_amplitude: complex = 0j) -> "SystemState":
        """All atoms in the zero-momentum mode."""
        L = params.lattice_size
        phi = np.zeros((L, L), dtype=np.complex128)
        phi[params.mode_cutoff, params.mode_cutoff] = np.sqrt(params.atom_number)
        return cls(phi, cavity_amplitude, 0.0)


def _check(state: SystemState, params: SystemParams) -> np.ndarray:
    phi = state.mode_amplitudes
    if phi.shape != (params.lattice_size, params.lattice_size):
        raise ValueError(
            f"state lattice {phi.shape} does not match mode_cutoff={params.mode_cutoff}"
        )
    bad = ~np.isfinite(phi)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        c = params.mode_cutoff
        raise NonFiniteStateError((int(i) - c, int(j) - c))
    if not np.isfinite(state.cavity_amplitude):
        raise NonFiniteStateError("cavity")
    return phi


def _pad(phi: np.ndarray) -> np.ndarray:
    return np.pad(phi, 2)


def _neighbours(phi: np.ndarray):
    """Shifted copies of phi with hard truncation outside the lattice.

    Returns (pump, cavity, cross) sums:
    phi[n-2,m]+phi[n+2,m], phi[n,m-2]+phi[n,m+2], and the four diagonal
    (+-1, +-1) neighbours.
    """
    P = _pad(phi)
    L = phi.shape[0]
    c = slice(2, L + 2)
    pump = P[0:L, c] + P[4:L + 4, c]
    cav = P[c, 0:L] + P[c, 4:L + 4]
    cross = P[1:L + 1, 1:L + 1] + P[1:L + 1, 3:L + 3] + P[3:L + 3, 1:L + 1] + P[3:L + 3, 3:L + 3]
    return pump, cav, cross


def order_parameter(phi: np.ndarray) -> complex:
    """Theta = <cos(ky) cos(kz)> summed over the lattice (carries atom number)."""
    _, _, cross = _neighbours(phi)
    return complex(0.25 * np.sum(np.conj(phi) * cross))


def bunching(phi: np.ndarray) -> float:
    """B = <cos^2(kz)> summed over the lattice."""
    _, cav, _ = _neighbours(phi)
    return float(np.real(np.sum(0.5 * np.abs(phi) ** 2 + 0.25 * np.conj(phi) * cav)))


def atom_derivative(state: SystemState, pump: PumpValue, params: SystemParams) -> np.ndarray:
    """dphi_{n,m}/dt on the (2 n_max + 1)^2 lattice."""
    phi = _check(state, params)
    a = state.cavity_amplitude
    eps = pump.depth_rate(params)
    U0 = params.light_shift_per_photon
    pump_nb, cav_nb, cross_nb = _neighbours(phi)
    rhs = (
        params.kinetic_frequencies() * phi
        + 0.25 * eps * (pump_nb + 2.0 * phi)
        + 0.25 * U0 * abs(a) ** 2 * (cav_nb + 2.0 * phi)
        + 0.25 * pump.eta * 2.0 * a.real * cross_nb
    )
    return -1j * rhs


def cavity_derivative(state: SystemState, pump: PumpValue, params: SystemParams) -> complex:
    """Deterministic da/dt; the decay noise is added by the integrator."""
    phi = _check(state, params)
    a = state.cavity_amplitude
    U0 = params.light_shift_per_photon
    theta = order_parameter(phi)
    B = bunching(phi)
    return complex(-1j * ((-params.bare_detuning + U0 * B) * a + pump.eta * theta) - params.cavity_decay * a)


def hamiltonian(state: SystemState, pump: PumpValue, params: SystemParams) -> float:
    """Classical energy H(phi, a) / hbar in rad/s."""
    phi = _check(state, params)
    a = state.cavity_amplitude
    U0 = params.light_shift_per_photon
    eps = pump.depth_rate(params)
    pump_nb, _, _ = _neighbours(phi)
    kinetic = np.sum(params.kinetic_frequencies() * np.abs(phi) ** 2)
    lattice = eps * np.real(np.sum(0.5 * np.abs(phi) ** 2 + 0.25 * np.conj(phi) * pump_nb))
    return float(
        -params.bare_detuning * abs(a) ** 2
        + kinetic
        + lattice
        + U0 * abs(a) ** 2 * bunching(phi)
        + pump.eta * 2.0 * a.real * order_parameter(phi).real
    )


@dataclass(frozen=True)
class Observables:
    n_photon: float
    theta: complex
    bunching: float
    n11: float
    norm: float


def observables(state: SystemState, twa: bool = False, clamp: bool = False) -> Observables:
    """Photon number, order parameter, bunching, {+-1,+-1} population and norm.

    In TWA mode the photon number is |a|^2 - 1/2 (symmetric ordering).  It is
    left unclamped by default so ensemble means stay unbiased; ``clamp=True``
    clips single-realization values at zero for display.
    """
    phi = state.mode_amplitudes
    a = state.cavity_amplitude
    n_p = abs(a) ** 2 - (0.5 if twa else 0.0)
    if clamp:
        n_p = max(n_p, 0.0)
    n11 = sum(abs(state.mode(n, m)) ** 2 for n in (-1, 1) for m in (-1, 1))
    return Observables(
        n_photon=float(n_p),
        theta=order_parameter(phi),
        bunching=bunching(phi),
        n11=float(n11),
        norm=float(np.sum(np.abs(phi) ** 2)),
    )
