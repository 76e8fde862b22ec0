import numpy as np
import pytest

from cavity_tc.drive import DriveProgram, Segment, standard_protocol
from cavity_tc.dynamics import (
    CSV_COLUMNS, IntegratorConfig, NumericalFault, TrajectoryRecord, cavity_increments, integrate,
)
from cavity_tc.ensemble import MF_CAVITY_SEED
from cavity_tc.model import SystemParams, SystemState, PumpValue, hamiltonian


def hold(duration, eps=0.0):
    return DriveProgram((Segment("hold", duration, eps),))


def empty(params, a=0j):
    L = params.lattice_size
    return SystemState(np.zeros((L, L)), a)


def test_empty_cavity_decay():
    p = SystemParams.theory()
    rec = integrate(empty(p, 1.0), hold(1e-3), IntegratorConfig(), p)
    expect = np.exp(-2 * p.cavity_decay * rec.times)
    assert np.max(np.abs(rec.n_photon / expect - 1)) < 1e-8


def test_empty_cavity_decay_integrating_factor():
    p = SystemParams.theory()
    rec = integrate(empty(p, 1.0), hold(1e-3), IntegratorConfig(step_size=50e-9, method="if-rk4"), p)
    expect = np.exp(-2 * p.cavity_decay * rec.times)
    assert np.max(np.abs(rec.n_photon / expect - 1)) < 1e-8


def test_energy_and_norm_conserved_without_dissipation():
    p = SystemParams.theory(cavity_decay=0.0)
    eps = 1.7
    s0 = SystemState.condensate(p, 2.0 + 1.0j)
    rec = integrate(s0, hold(10e-3, eps), IntegratorConfig(), p)
    pv = PumpValue.from_depth(eps, p)
    e0 = hamiltonian(s0, pv, p)
    e1 = hamiltonian(rec.final_state, pv, p)
    assert np.ptp(rec.n_photon) > 1.0  # the state actually evolves
    assert abs(e1 - e0) / abs(e0) < 1e-6
    assert np.max(np.abs(rec.norm / p.atom_number - 1)) < 1e-9


def test_sublattice_stays_empty():
    p = SystemParams.theory()
    rec = integrate(SystemState.condensate(p, MF_CAVITY_SEED), standard_protocol(f0=0.2),
                    IntegratorConfig.fast(), p)
    n = np.arange(-p.mode_cutoff, p.mode_cutoff + 1)
    odd = ((n[:, None] + n[None, :]) % 2) == 1
    assert rec.n_photon.max() > 100
    assert np.max(np.abs(rec.final_state.mode_amplitudes[odd]) ** 2) < 1e-20


def test_ou_stationary_occupation():
    n_max = 2
    N = 4e4
    U0 = SystemParams().light_shift_per_photon
    p = SystemParams(atom_number=N, effective_detuning=-0.5 * N * U0, mode_cutoff=n_max)
    assert p.bare_detuning == 0
    cfg = IntegratorConfig(step_size=0.1e-6, sample_interval=5e-6, method="if-rk4", stochastic=True)
    prog = hold(0.5e-3)
    finals = []
    for k in range(1000):
        rec = integrate(empty(p), prog, cfg, p, rng=np.random.default_rng([17, k]), keep_final=False)
        finals.append(rec.n_photon[-1] + 0.5)
    finals = np.array(finals)
    err = finals.std(ddof=1) / np.sqrt(finals.size)
    assert abs(finals.mean() - 0.5) < 3 * err


def test_noise_correlator():
    kappa, dt, n = SystemParams().cavity_decay, 20e-9, 10**6
    d = cavity_increments(np.random.default_rng(5), n, kappa, dt) / dt
    target = kappa / dt
    auto = np.mean(np.abs(d) ** 2) / target
    lag = np.mean(np.conj(d[:-1]) * d[1:]) / target
    pseudo = np.mean(d * d) / target
    sigma = 1 / np.sqrt(n)
    assert abs(auto - 1) < 5 * sigma
    assert abs(lag) < 5 * sigma * np.sqrt(2)
    assert abs(pseudo) < 5 * sigma * np.sqrt(2)


def test_deterministic_replay():
    p = SystemParams.theory(mode_cutoff=3)
    prog = standard_protocol(f0=0.2, ramp_time=2e-3, modulation_time=2e-3)
    cfg = IntegratorConfig.fast(stochastic=True, rng_seed=99)
    r1 = integrate(SystemState.condensate(p, 0.3), prog, cfg, p)
    r2 = integrate(SystemState.condensate(p, 0.3), prog, cfg, p)
    for name in ("n_photon", "theta", "bunching", "n11", "epsilon", "norm"):
        assert np.array_equal(getattr(r1, name), getattr(r2, name))
    r3 = integrate(SystemState.condensate(p, 0.3), prog, IntegratorConfig.fast(stochastic=True, rng_seed=100), p)
    assert not np.array_equal(r1.n_photon, r3.n_photon)


def halving_error(prog, coarse_dt, method="rk4", a0=MF_CAVITY_SEED):
    p = SystemParams.theory()
    s0 = SystemState.condensate(p, a0)
    coarse = integrate(s0, prog, IntegratorConfig(step_size=coarse_dt, method=method), p).n_photon
    fine = integrate(s0, prog, IntegratorConfig(step_size=coarse_dt / 2, method=method), p).n_photon
    return np.sqrt(np.mean((coarse - fine) ** 2)) / np.sqrt(np.mean(fine**2))


def test_step_halving_well_conditioned():
    rel = halving_error(standard_protocol(ramp_time=3e-3, modulation_time=2e-3), 20e-9)
    assert rel < 1e-4


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="slow threshold passage amplifies rounding above 1e-4; see rounding test")
def test_step_halving_default_protocol():
    rel = halving_error(standard_protocol(), 20e-9)
    print(f"step-halving relative RMS {rel:.2e}")
    assert rel < 1e-4


def test_default_protocol_rounding_sensitivity():
    # a 1e-15 relative change of the seed already moves the trace by more than 1e-5
    p = SystemParams.theory()
    prog = standard_protocol()
    cfg = IntegratorConfig.fast()
    base = integrate(SystemState.condensate(p, MF_CAVITY_SEED), prog, cfg, p).n_photon
    bumped = integrate(SystemState.condensate(p, MF_CAVITY_SEED * (1 + 1e-15)), prog, cfg, p).n_photon
    rel = np.sqrt(np.mean((base - bumped) ** 2)) / np.sqrt(np.mean(base**2))
    assert rel > 1e-5


def test_fast_scheme_tracks_reference_scheme():
    p = SystemParams.theory()
    prog = standard_protocol()
    s0 = SystemState.condensate(p, MF_CAVITY_SEED)
    ref = integrate(s0, prog, IntegratorConfig(step_size=50e-9), p).n_photon
    fast = integrate(s0, prog, IntegratorConfig.fast(), p).n_photon
    rel = np.sqrt(np.mean((fast - ref) ** 2)) / np.sqrt(np.mean(ref**2))
    assert rel < 5e-3


def test_truncation_convergence():
    prog = standard_protocol()
    traces = []
    for n_max in (6, 12):
        p = SystemParams.theory(mode_cutoff=n_max)
        traces.append(integrate(SystemState.condensate(p, MF_CAVITY_SEED), prog, IntegratorConfig.fast(), p).n_photon)
    rel = np.sqrt(np.mean((traces[0] - traces[1]) ** 2)) / np.sqrt(np.mean(traces[1] ** 2))
    assert rel < 0.01


def test_stability_bound_enforced():
    p = SystemParams.theory()
    with pytest.raises(ValueError, match="too large"):
        integrate(SystemState.condensate(p), hold(1e-4), IntegratorConfig(step_size=500e-9, sample_interval=5e-6), p)
    with pytest.raises(ValueError):
        IntegratorConfig(step_size=3e-6, sample_interval=5e-6)


def test_numerical_fault_reports_location():
    p = SystemParams.theory()
    s0 = SystemState.condensate(p, 1e160)
    prog = DriveProgram((Segment("hold", 0.2e-3, 0.0), Segment("hold", 0.2e-3, 1.7)))
    with pytest.raises(NumericalFault) as info:
        integrate(s0, prog, IntegratorConfig(), p)
    fault = info.value
    assert 0 < fault.time <= prog.duration
    assert fault.segment in (0, 1)
    assert fault.last_sample < fault.time


def test_mismatched_initial_state():
    p = SystemParams.theory()
    with pytest.raises(ValueError):
        integrate(SystemState(np.zeros((5, 5))), hold(1e-4), IntegratorConfig(), p)


def test_record_grid_and_metadata():
    p = SystemParams.theory()
    prog = standard_protocol()
    rec = integrate(SystemState.condensate(p, MF_CAVITY_SEED), prog, IntegratorConfig.fast(), p)
    assert len(rec.times) == 4201
    assert np.allclose(np.diff(rec.times), 5e-6)
    assert rec.boundaries == pytest.approx(tuple(prog.boundaries))
    assert np.all(np.isfinite(rec.n_photon))
    assert rec.window(*prog.analysis_window).sum() == 2000
    assert rec.meta["analysis_window"] == pytest.approx(list(prog.analysis_window))


def test_csv_and_binary_round_trip(tmp_path):
    p = SystemParams.theory(mode_cutoff=3)
    prog = standard_protocol(f0=0.2, ramp_time=1e-3, modulation_time=1e-3)
    rec = integrate(SystemState.condensate(p, 0.5), prog, IntegratorConfig.fast(stochastic=True, rng_seed=4), p)
    text = rec.to_csv(tmp_path / "t.csv")
    assert text.splitlines()[0].split(",") == list(CSV_COLUMNS)
    back = TrajectoryRecord.from_csv(tmp_path / "t.csv")
    for name in ("times", "n_photon", "theta", "bunching", "n11", "epsilon"):
        assert np.array_equal(getattr(back, name), getattr(rec, name))
    rec.save(tmp_path / "t.npz")
    loaded = TrajectoryRecord.load(tmp_path / "t.npz")
    for name in ("times", "n_photon", "theta", "bunching", "n11", "epsilon", "norm"):
        assert np.array_equal(getattr(loaded, name), getattr(rec, name))
    assert loaded.seed == 4 and loaded.twa
    assert loaded.meta["params"]["mode_cutoff"] == 3
    assert "version" in loaded.meta
