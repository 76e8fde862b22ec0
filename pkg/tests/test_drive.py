import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavity_tc.drive import (
    FUNDAMENTAL_AMPLITUDE, DriveProgram, NoiseChannel, Segment, evaluate_drive, standard_protocol, waveform,
)
from cavity_tc.model import TWO_PI, SystemParams
from cavity_tc.spectral import spectrum_of


def single_modulation(kind, eps_f=2.0, f0=0.45, omega=TWO_PI * 22.5e3):
    return DriveProgram((Segment("modulate", 1e-3, eps_f, f0_start=f0, waveform=kind, omega_dr=omega),))


def test_sine_at_zero_phase():
    eps, _ = single_modulation("sine").sample(np.array([0.0]))
    assert eps[0] == pytest.approx(2.9, rel=1e-15)


def test_square_just_past_quarter_period():
    omega = TWO_PI * 22.5e3
    t = 0.25 * TWO_PI / omega + 1e-9
    eps, _ = single_modulation("square", omega=omega).sample(np.array([t]))
    assert eps[0] == pytest.approx(1.1, rel=1e-14)


def test_ramp_midpoint():
    prog = DriveProgram((Segment("ramp", 10e-3, 0.0, 2.0),))
    pv, info = evaluate_drive(prog, 5e-3, SystemParams.theory())
    assert pv.epsilon == pytest.approx(1.0, rel=1e-14)
    assert info["segment"] == 0


def test_out_of_span_rejected():
    prog = standard_protocol()
    with pytest.raises(ValueError):
        evaluate_drive(prog, prog.duration + 1e-3, SystemParams.theory())
    with pytest.raises(ValueError):
        evaluate_drive(prog, -1e-9, SystemParams.theory())


def test_standard_protocol_boundaries():
    prog = standard_protocol(epsilon_f=2.0, f0=0.45, omega_dr=TWO_PI * 22.5e3)
    np.testing.assert_allclose(prog.boundaries * 1e3, [10.0, 10.5, 11.0, 21.0], rtol=1e-12)
    assert prog.analysis_window == pytest.approx((11e-3, 21e-3))


def test_unmodulated_protocol_is_constant():
    prog = standard_protocol(epsilon_f=1.7, f0=0.0)
    t = np.linspace(10.0e-3, 21e-3, 5001)
    eps, _ = prog.sample(t)
    assert np.all(eps == 1.7)


def test_analysis_window_resolution():
    prog = standard_protocol()
    t0, t1 = prog.analysis_window
    t = np.arange(2000) * 5e-6
    spec = spectrum_of(np.cos(t), 5e-6)
    assert t1 - t0 == pytest.approx(10e-3)
    assert spec.resolution == pytest.approx(100.0)


def test_fundamental_amplitudes():
    theta = np.linspace(0, TWO_PI, 1 << 16, endpoint=False)
    for name, expect in FUNDAMENTAL_AMPLITUDE.items():
        g = waveform(name, theta)
        c1 = 2 * abs(np.mean(g * np.exp(-1j * theta)))
        assert c1 == pytest.approx(expect, rel=1e-3)
        assert g.min() >= -1 and g.max() <= 1


def test_continuity_across_boundaries():
    prog = standard_protocol(epsilon_f=1.7, f0=0.3)
    for b in prog.boundaries[:-1]:
        left, right = prog.sample(np.array([b - 1e-12, b + 1e-12]))[0]
        assert abs(left - right) < 1e-6


@settings(max_examples=50, deadline=None)
@given(eps_f=st.floats(0.1, 4.0), f0=st.floats(0.0, 0.9), phase=st.floats(-np.pi, np.pi),
       t=st.floats(0.0, 1e-3), kind=st.sampled_from(["sine", "square", "sawtooth"]))
def test_modulated_depth_bounds(eps_f, f0, phase, t, kind):
    prog = DriveProgram((Segment("modulate", 1e-3, eps_f, f0_start=f0, waveform=kind, omega_dr=TWO_PI * 2e4,
                                 drive_phase=phase),))
    eps = prog.sample(np.array([t]))[0][0]
    assert eps_f * (1 - f0) - 1e-12 <= eps <= eps_f * (1 + f0) + 1e-12


def test_sine_convention_reachable_by_phase():
    omega = TWO_PI * 2e4
    prog = DriveProgram((Segment("modulate", 1e-3, 1.0, f0_start=0.5, omega_dr=omega, drive_phase=-np.pi / 2),))
    t = np.linspace(0, 1e-3, 101)
    np.testing.assert_allclose(prog.sample(t)[0], 1 + 0.5 * np.sin(omega * t), atol=1e-14)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment("wiggle", 1e-3, 1.0)
    with pytest.raises(ValueError):
        Segment("modulate", 1e-3, 1.0, f0_start=-0.1, omega_dr=1.0)
    with pytest.raises(ValueError):
        Segment("hold", 0.0, 1.0)
    with pytest.raises(ValueError):
        NoiseChannel("kappa", 1.0)


def test_noise_is_bounded_and_piecewise_constant():
    prog = standard_protocol(epsilon_f=1.7, f0=0.2, noise=[NoiseChannel("epsilon_f", 0.5)])
    state = prog.draw_noise(np.random.default_rng(1))
    t0, t1 = prog.analysis_window
    t = np.linspace(t0, t1, 20001)
    eps, _ = prog.sample(t, state)
    clean, _ = prog.sample(t)
    dev = eps - clean
    assert np.all(np.abs(dev) <= 0.5 * 1.2 + 1e-12)
    assert np.std(dev) > 0.05


def test_detuning_noise_offsets_only_detuning():
    prog = standard_protocol(epsilon_f=1.7, f0=0.2, noise=[NoiseChannel("delta_eff", TWO_PI * 2.5e3)])
    state = prog.draw_noise(np.random.default_rng(2))
    t = np.linspace(11e-3, 21e-3, 4001)
    eps, dd = prog.sample(t, state)
    np.testing.assert_array_equal(eps, prog.sample(t)[0])
    assert np.max(np.abs(dd)) <= TWO_PI * 2.5e3
    assert np.all(prog.sample(np.linspace(0, 10e-3, 100), state)[1] == 0)


def test_frequency_noise_keeps_phase_continuous():
    prog = standard_protocol(epsilon_f=1.7, f0=0.5, noise=[NoiseChannel("omega_dr", TWO_PI * 2e3)])
    state = prog.draw_noise(np.random.default_rng(3))
    t = np.arange(11e-3, 21e-3, 1e-8)
    eps, _ = prog.sample(t, state)
    # a phase jump would show as a step far above the smooth slope bound
    slope = 1.7 * 0.5 * (TWO_PI * 22.5e3)
    assert np.max(np.abs(np.diff(eps))) < 1.5 * slope * 1e-8


def test_program_dict_round_trip():
    prog = standard_protocol(epsilon_f=2.0, f0=0.45, waveform="square", noise=[NoiseChannel("f0", 0.1)])
    assert DriveProgram.from_dict(prog.to_dict()) == prog
