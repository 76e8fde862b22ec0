"""Spectra, peak fits, phases and circular statistics of trajectory records.

Frequencies on a spectrum grid are in Hz.  Every ``omega`` argument and
every fitted center is an angular frequency in rad/s.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit, OptimizeWarning

TWO_PI = 2.0 * math.pi
MIN_SAMPLES = 64
FIT_HALF_WIDTH = 5  # bins either side of the maximum used by the Gaussian fit
WINDOWS = ("rect", "hann")


@dataclass
class Spectrum:
    """Single-sided amplitude spectrum of a mean-subtracted series.

    ``amplitudes`` are scaled so a tone ``A cos(2 pi f t + p)`` on a grid
    frequency reads ``A exp(i p)`` (rectangular window).  ``raw`` keeps the
    unscaled first half of the DFT of the windowed series.
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray
    raw: np.ndarray
    start: float
    length: float
    n_samples: int
    sample_interval: float
    window: str = "rect"
    windowed: np.ndarray | None = field(default=None, repr=False)

    @property
    def resolution(self) -> float:
        return 1.0 / self.length

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.amplitudes)

    def nearest_bin(self, frequency_hz: float) -> int:
        return int(np.argmin(np.abs(self.frequencies - frequency_hz)))

    def parseval_sides(self) -> tuple[float, float]:
        """(sum |x_w|^2, energy from the single-sided DFT); equal up to rounding."""
        x = self.windowed
        n = self.n_samples
        X = self.raw
        weights = np.full(len(X), 2.0)
        weights[0] = 1.0
        if n % 2 == 0:
            weights[-1] = 1.0
        return float(np.sum(np.abs(x) ** 2)), float(np.sum(weights * np.abs(X) ** 2) / n)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("frequency_hz", "amp_re", "amp_im", "power"))
        for f, a, p in zip(self.frequencies, self.amplitudes, self.power):
            w.writerow((repr(float(f)), repr(float(a.real)), repr(float(a.imag)), repr(float(p))))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def spectrum_of(values, sample_interval: float, start: float = 0.0, window: str = "rect") -> Spectrum:
    """Spectrum of a uniformly sampled real series."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < MIN_SAMPLES:
        raise ValueError(f"spectral window holds {n} samples; at least {MIN_SAMPLES} are required")
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {WINDOWS}, got {window!r}")
    x = x - x.mean()
    if window == "hann":
        w = np.hanning(n + 1)[:-1]  # periodic Hann
        xw = x * w
        gain = w.mean()
    else:
        xw = x
        gain = 1.0
    X = np.fft.rfft(xw)
    scale = np.full(len(X), 2.0 / (n * gain))
    scale[0] = 1.0 / (n * gain)
    if n % 2 == 0:
        scale[-1] = 1.0 / (n * gain)
    freqs = np.fft.rfftfreq(n, sample_interval)
    return Spectrum(freqs, X * scale, X, float(start), n * sample_interval, n, float(sample_interval),
                    window, xw)


def window_samples(record, window=None, observable: str = "N_P"):
    """(times, values) of ``observable`` inside window (t0, t1]."""
    if window is None:
        window = record.meta.get("analysis_window") or (record.times[0], record.times[-1])
    t0, t1 = window
    span = (record.times[0] - 1e-12, record.times[-1] + 1e-12)
    if t0 < span[0] or t1 > span[1] or not t1 > t0:
        raise ValueError(f"window {window} outside record span [{record.times[0]}, {record.times[-1]}]")
    mask = record.window(t0, t1)
    return record.times[mask], np.real(record.observable(observable)[mask])


def compute_spectrum(record, window=None, observable: str = "N_P", window_function: str = "rect") -> Spectrum:
    """Spectrum of one observable of a TrajectoryRecord over (t0, t1].

    The window defaults to the analysis window stored with the record.
    """
    t, x = window_samples(record, window, observable)
    if x.size < MIN_SAMPLES:
        raise ValueError(f"spectral window holds {x.size} samples; at least {MIN_SAMPLES} are required")
    dt = record.sample_interval
    return spectrum_of(x, dt, start=float(t[0] - dt), window=window_function)


def subharmonic_response(spectrum: Spectrum, omega_dr: float) -> float:
    """Raw S: spectral amplitude at the grid frequency nearest omega_dr / 2.

    When omega_dr / 2 falls exactly between two bins the larger one is used.
    """
    target = omega_dr / (2.0 * TWO_PI)
    if not (spectrum.frequencies[0] <= target <= spectrum.frequencies[-1]):
        raise ValueError(f"omega_dr/2 = {target:.1f} Hz outside the spectral range")
    d = np.abs(spectrum.frequencies - target)
    ties = np.flatnonzero(d <= d.min() + 1e-9 * spectrum.resolution)
    return float(np.max(spectrum.magnitude[ties]))


def normalize_S(raw_values) -> np.ndarray:
    """Relative S over a batch: divide by the batch maximum."""
    raw = np.asarray(raw_values, dtype=float)
    peak = np.nanmax(raw) if raw.size else np.nan
    if not peak > 0:
        return np.zeros_like(raw)
    return raw / peak


@dataclass(frozen=True)
class PeakFit:
    center: float      # rad/s
    amplitude: float   # height above the offset, spectrum units
    width: float       # Gaussian sigma, rad/s
    offset: float
    residual: float    # RMS residual of the fit over the fitted bins
    fallback: bool = False

    @property
    def frequency_hz(self) -> float:
        return self.center / TWO_PI


def _gauss(f, amp, f0, sigma, c):
    return amp * np.exp(-0.5 * ((f - f0) / sigma) ** 2) + c


def fit_dominant_peak(spectrum: Spectrum, search_band=None, use_power: bool = False) -> PeakFit:
    """Gaussian-plus-constant fit over +-5 bins around the largest bin in band.

    ``search_band`` is (omega_lo, omega_hi) in rad/s; the default excludes
    only the DC bin.  A fit that fails, or lands outside the band, falls
    back to the maximum bin and is flagged.
    """
    y_all = spectrum.power if use_power else spectrum.magnitude
    f = spectrum.frequencies
    if search_band is None:
        sel = np.arange(1, len(f))
        lo, hi = f[1], f[-1]
    else:
        lo, hi = search_band[0] / TWO_PI, search_band[1] / TWO_PI
        sel = np.flatnonzero((f >= lo - 1e-9) & (f <= hi + 1e-9))
    if sel.size < 7:
        raise ValueError(f"search band holds {sel.size} bins; at least 7 are required")
    k = int(sel[np.argmax(y_all[sel])])
    i0 = max(k - FIT_HALF_WIDTH, 0)
    i1 = min(k + FIT_HALF_WIDTH + 1, len(f))
    fx, fy = f[i0:i1], y_all[i0:i1]
    df = spectrum.resolution
    peak = float(y_all[k])
    base = float(fy.min())
    fallback = PeakFit(TWO_PI * f[k], max(peak - base, 0.0), TWO_PI * df, base, float("nan"), True)
    if peak <= 0:
        return fallback
    # fit in bin units about the maximum so the parameters are well scaled
    x = (fx - f[k]) / df
    w = np.clip(fy - base, 0.0, None)
    x0 = float(np.sum(w * x) / np.sum(w)) if np.sum(w) > 0 else 0.0
    p0 = (peak - base, x0, 1.0, base)
    bounds = ([0.0, x[0], 0.05, -np.inf], [np.inf, x[-1], 20.0, np.inf])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(_gauss, x, fy, p0=p0, bounds=bounds, maxfev=5000)
    except (RuntimeError, ValueError):
        return fallback
    amp, x_c, sigma, c = popt
    f0 = f[k] + x_c * df
    if not np.all(np.isfinite(popt)) or not (lo - df <= f0 <= hi + df):
        return fallback
    resid = float(np.sqrt(np.mean((_gauss(x, *popt) - fy) ** 2)))
    return PeakFit(TWO_PI * f0, float(amp), TWO_PI * float(abs(sigma)) * df, float(c), resid, False)


@dataclass(frozen=True)
class PhaseEstimate:
    phase: float       # rad, in (-pi, pi]
    amplitude: float
    low_confidence: bool


def wrap_phase(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    y = np.where(y <= -math.pi, y + TWO_PI, y)
    return float(y) if np.ndim(y) == 0 else y


def tone_amplitude(times, values, omega: float, t_ref: float = 0.0) -> complex:
    """Single-frequency DFT 2/N sum x_k exp(-i omega (t_k - t_ref)) of the mean-subtracted series."""
    x = np.asarray(values, dtype=float)
    x = x - x.mean()
    t = np.asarray(times, dtype=float) - t_ref
    return complex(2.0 / x.size * np.sum(x * np.exp(-1j * omega * t)))


def drive_reference_time(record) -> float:
    """Time at which the drive phase is zero (modulation onset for drive_phase 0)."""
    prog = record.meta.get("program")
    if not prog:
        return 0.0
    origin = 0.0
    for seg in prog["segments"]:
        if seg["kind"] == "modulate":
            return origin - seg.get("drive_phase", 0.0) / seg["omega_dr"]
        origin += seg["duration"]
    return 0.0


def extract_phase(record, omega: float, window=None, observable: str = "N_P", t_ref: float | None = None,
                  exact: bool = True, floor_factor: float = 3.0) -> PhaseEstimate:
    """Oscillation phase of an observable at omega, relative to the drive.

    The phase is the argument of ``sum x_k exp(-i omega (t_k - t_ref))``
    with t_ref the instant of zero drive phase, so ``cos(omega (t - t_ref))``
    gives 0 and ``sin`` gives -pi/2.  ``exact=False`` uses the nearest grid
    bin of the window instead of omega itself.  The estimate is flagged
    when its amplitude is below ``floor_factor`` times the median spectral
    amplitude of the window.
    """
    t, x = window_samples(record, window, observable)
    if t_ref is None:
        t_ref = drive_reference_time(record)
    spec = spectrum_of(x, record.sample_interval, start=float(t[0]))
    if not (0 < omega / TWO_PI <= spec.frequencies[-1]):
        raise ValueError(f"frequency {omega / TWO_PI:.1f} Hz outside the spectral range")
    w = omega if exact else TWO_PI * spec.frequencies[spec.nearest_bin(omega / TWO_PI)]
    A = tone_amplitude(t, x, w, t_ref)
    floor = float(np.median(spec.magnitude[1:]))
    return PhaseEstimate(wrap_phase(np.angle(A)), abs(A), abs(A) < floor_factor * floor)


@dataclass(frozen=True)
class CrystallineFraction:
    value: float
    twa_peak: float
    mf_peak: float
    defined: bool


def mean_power(spectra: Sequence[Spectrum]) -> Spectrum:
    """Incoherent average: a Spectrum whose power is the mean power of the inputs."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("no spectra to average")
    ref = spectra[0]
    for s in spectra[1:]:
        if s.n_samples != ref.n_samples or not np.allclose(s.frequencies, ref.frequencies):
            raise ValueError("spectra differ in window or grid")
    p = np.mean([s.power for s in spectra], axis=0)
    return Spectrum(ref.frequencies, np.sqrt(p).astype(complex), np.sqrt(p).astype(complex), ref.start,
                    ref.length, ref.n_samples, ref.sample_interval, ref.window, None)


def crystalline_fraction(twa, mf: Spectrum, search_band=None, mf_floor: float = 1e-9) -> CrystallineFraction:
    """Xi = fitted power peak of the TWA spectrum / that of the mean-field spectrum.

    ``twa`` is one Spectrum or a sequence of per-trajectory spectra whose
    power is averaged before the fit.
    """
    if not isinstance(twa, Spectrum):
        twa = mean_power(twa)
    if twa.n_samples != mf.n_samples:
        raise ValueError("TWA and mean-field spectra must share a window")
    p_twa = _peak_height(twa, search_band)
    p_mf = _peak_height(mf, search_band)
    if not p_mf > mf_floor * max(1.0, float(np.max(mf.power))) or not p_mf > 0:
        return CrystallineFraction(float("nan"), p_twa, p_mf, False)
    return CrystallineFraction(p_twa / p_mf, p_twa, p_mf, True)


def _peak_height(spec: Spectrum, band) -> float:
    fit = fit_dominant_peak(spec, band, use_power=True)
    if fit.fallback:
        return float(fit.amplitude + fit.offset)
    return float(fit.amplitude + max(fit.offset, 0.0))


@dataclass(frozen=True)
class Sideband:
    order: int
    sign: int
    frequency_hz: float
    amplitude: float
    ratio: float


@dataclass(frozen=True)
class SidebandReport:
    main_frequency_hz: float
    main_amplitude: float
    delta_hz: float
    sidebands: tuple
    classification: str  # "periodic" | "quasiperiodic"

    def orders_found(self) -> set:
        return {s.order for s in self.sidebands}


def _local_peak(spec: Spectrum, f_target: float, tol_bins: int):
    k = spec.nearest_bin(f_target)
    lo, hi = max(k - tol_bins, 1), min(k + tol_bins + 1, len(spec.frequencies) - 1)
    mag = spec.magnitude
    best = None
    for j in range(lo, hi):
        if mag[j] >= mag[j - 1] and mag[j] >= mag[j + 1] and (best is None or mag[j] > mag[best]):
            best = j
    return best


def detect_sidebands(spectrum: Spectrum, omega_main: float, omega_dr: float, threshold: float = 0.05,
                     orders: Sequence[int] = (1,), tolerance_bins: int = 1,
                     min_separation_bins: float = 2.0) -> SidebandReport:
    """Secondary peaks at f_main +- k * Delta, Delta = |f_main - f_dr / 2|.

    A sideband is a local maximum within ``tolerance_bins`` of its target
    whose amplitude exceeds ``threshold`` times the main peak.  Orders whose
    offset is closer than ``min_separation_bins`` to the main peak cannot be
    resolved and are skipped.
    """
    f_main = omega_main / TWO_PI
    delta = abs(f_main - omega_dr / (2.0 * TWO_PI))
    k_main = spectrum.nearest_bin(f_main)
    lo, hi = max(k_main - 1, 1), min(k_main + 2, len(spectrum.frequencies))
    main_amp = float(np.max(spectrum.magnitude[lo:hi]))
    found = []
    if main_amp > 0:
        for order in orders:
            offset = order * delta
            if offset < min_separation_bins * spectrum.resolution:
                continue
            for sign in (-1, 1):
                f_t = f_main + sign * offset
                if not (spectrum.frequencies[1] <= f_t <= spectrum.frequencies[-1]):
                    continue
                j = _local_peak(spectrum, f_t, tolerance_bins)
                if j is None:
                    continue
                ratio = float(spectrum.magnitude[j] / main_amp)
                if ratio > threshold:
                    found.append(Sideband(order, sign, float(spectrum.frequencies[j]),
                                          float(spectrum.magnitude[j]), ratio))
    cls = "quasiperiodic" if found else "periodic"
    return SidebandReport(f_main, main_amp, delta, tuple(found), cls)


# circular statistics

def mean_resultant(phases, harmonic: int = 1) -> complex:
    z = np.exp(1j * harmonic * np.asarray(phases, dtype=float))
    return complex(np.mean(z))


def circular_variance(phases) -> float:
    return 1.0 - abs(mean_resultant(phases))


@dataclass(frozen=True)
class RayleighResult:
    n: int
    R: float          # mean resultant length
    Z: float          # n R^2
    p_value: float

    def rejects_uniformity(self, alpha: float = 0.01) -> bool:
        return self.p_value < alpha


def rayleigh_test(phases) -> RayleighResult:
    """Rayleigh test of circular uniformity against a unimodal alternative.

    Uses the large-sample corrected p-value
    ``exp(sqrt(1 + 4n + 4(n^2 - R_n^2)) - (1 + 2n))`` with R_n = n R.
    """
    ph = np.asarray(phases, dtype=float)
    n = ph.size
    if n < 2:
        raise ValueError("Rayleigh test needs at least two phases")
    R = abs(mean_resultant(ph))
    Rn = n * R
    p = math.exp(math.sqrt(1.0 + 4.0 * n + 4.0 * (n * n - Rn * Rn)) - (1.0 + 2.0 * n))
    return RayleighResult(n, R, n * R * R, min(max(p, 0.0), 1.0))


def phase_histogram(phases, bins: int = 24):
    """Counts over equal bins of (-pi, pi]; returns (edges, counts)."""
    edges = np.linspace(-math.pi, math.pi, bins + 1)
    counts, _ = np.histogram(wrap_phase(np.asarray(phases, dtype=float)), bins=edges)
    return edges, counts


def phases_to_csv(phases, amplitudes=None, path=None) -> str:
    """Phase-scatter table: index, phase, amplitude, re, im."""
    ph = np.asarray(phases, dtype=float)
    amp = np.ones_like(ph) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("index", "phase", "amplitude", "re", "im"))
    for i, (p, a) in enumerate(zip(ph, amp)):
        w.writerow((i, repr(float(p)), repr(float(a)), repr(float(a * math.cos(p))), repr(float(a * math.sin(p)))))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def histogram_to_csv(edges, counts, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("bin_lo", "bin_hi", "count"))
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        w.writerow((repr(float(lo)), repr(float(hi)), int(c)))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
