import numpy as np
import pytest

from cavity_tc.drive import standard_protocol
from cavity_tc.dynamics import IntegratorConfig, integrate
from cavity_tc.ensemble import (
    MF_CAVITY_SEED, EnsembleResult, WignerSampler, classify_phases, post_select_by_phase, run_ensemble,
    sample_initial, trajectory_seed, two_means_circle,
)
from cavity_tc.model import TWO_PI, SystemParams, observables

from synth import make_record, tone_grid


def draws(sampler, n, seed=0):
    rng = np.random.default_rng(seed)
    return [sampler.sample(rng) for _ in range(n)]


def test_empty_mode_vacuum_width():
    p = SystemParams.theory(mode_cutoff=2)
    sampler = WignerSampler.condensate(p)
    samples = np.array([s.mode_amplitudes[0, 0] for s, _ in draws(sampler, 10_000)])
    occ = np.abs(samples) ** 2
    err = occ.std(ddof=1) / np.sqrt(occ.size)
    assert abs(occ.mean() - 0.5) < 3 * err
    assert abs(samples.mean()) < 3 * np.sqrt(0.5 / samples.size)


def test_condensate_number_fluctuation():
    p = SystemParams.theory(mode_cutoff=2)
    n = np.array([abs(s.mode_amplitudes[2, 2]) ** 2 for s, _ in draws(WignerSampler.condensate(p), 10_000)])
    # coherent state: var(|alpha|^2) = N_a + 1/4 for the Wigner width 1/2 per quadrature pair
    expect = np.sqrt(p.atom_number + 0.25)
    se = expect / np.sqrt(2 * (n.size - 1))
    assert abs(n.std(ddof=1) - expect) < 3 * se
    assert abs(n.std(ddof=1) - 200.0) < 10.0


def test_technical_number_noise_width():
    p = SystemParams.theory(mode_cutoff=2)
    sigma = 10 * np.sqrt(p.atom_number)
    sampler = WignerSampler.condensate(p, technical_number_std=sigma)
    out = draws(sampler, 10_000, seed=4)
    n = np.array([abs(s.mode_amplitudes[2, 2]) ** 2 for s, _ in out])
    se = sigma / np.sqrt(2 * (n.size - 1))
    assert abs(n.std(ddof=1) - sigma) < 3 * se + 1.0
    assert abs(n.std(ddof=1) - 2000.0) < 100.0
    assert sum(r for _, r in out) == 0


def test_truncated_redraws_are_counted():
    p = SystemParams.theory(mode_cutoff=2, atom_number=100)
    sampler = WignerSampler.condensate(p, technical_number_std=150.0)
    out = draws(sampler, 2000, seed=1)
    redraws = sum(r for _, r in out)
    assert redraws > 0
    assert all(abs(s.mode_amplitudes[2, 2]) > 0 for s, _ in out)


def test_sample_initial_reproducible():
    p = SystemParams.theory(mode_cutoff=2)
    sampler = WignerSampler.condensate(p)
    s1 = sample_initial(sampler, trajectory_seed(5, 3))
    s2 = sample_initial(sampler, trajectory_seed(5, 3))
    s3 = sample_initial(sampler, trajectory_seed(5, 4))
    assert np.array_equal(s1.mode_amplitudes, s2.mode_amplitudes)
    assert not np.array_equal(s1.mode_amplitudes, s3.mode_amplitudes)


def test_trajectory_seed_matches_spawn():
    spawned = np.random.SeedSequence(77).spawn(5)
    for i in range(5):
        assert np.array_equal(trajectory_seed(77, i).generate_state(4), spawned[i].generate_state(4))


def test_vacuum_photon_number_at_start():
    p = SystemParams.theory(mode_cutoff=2)
    sampler = WignerSampler.condensate(p)
    n_p = np.array([observables(s, twa=True).n_photon for s, _ in draws(sampler, 10_000, seed=9)])
    assert abs(n_p.mean()) < 3 * n_p.std(ddof=1) / np.sqrt(n_p.size)


@pytest.fixture(scope="module")
def short_setup():
    p = SystemParams.theory(mode_cutoff=3)
    prog = standard_protocol(f0=0.3, ramp_time=2e-3, modulation_time=2e-3)
    return p, prog, IntegratorConfig.fast()


def test_mean_field_single_trajectory_equals_integrate(short_setup):
    p, prog, cfg = short_setup
    sampler = WignerSampler.condensate(p, cavity=MF_CAVITY_SEED)
    ens = run_ensemble(sampler, prog, cfg, p, 1, mode="mf")
    ref = integrate(sampler.mean_state(), prog, cfg, p)
    assert np.array_equal(ens.records[0].n_photon, ref.n_photon)
    assert np.array_equal(ens.records[0].n11, ref.n11)


def test_mean_field_requires_one_trajectory(short_setup):
    p, prog, cfg = short_setup
    with pytest.raises(ValueError):
        run_ensemble(WignerSampler.condensate(p), prog, cfg, p, 3, mode="mf")


def test_ensemble_determinism_and_worker_invariance(short_setup):
    p, prog, cfg = short_setup
    sampler = WignerSampler.condensate(p)
    a = run_ensemble(sampler, prog, cfg, p, 4, master_seed=11, workers=1)
    b = run_ensemble(sampler, prog, cfg, p, 4, master_seed=11, workers=1)
    c = run_ensemble(sampler, prog, cfg, p, 4, master_seed=11, workers=3)
    for other in (b, c):
        assert other.indices == a.indices
        for r1, r2 in zip(a.records, other.records):
            assert np.array_equal(r1.n_photon, r2.n_photon)
    d = run_ensemble(sampler, prog, cfg, p, 2, master_seed=11, first_index=2)
    assert np.array_equal(d.records[0].n_photon, a.records[2].n_photon)
    assert a.records[0].twa and a.mode == "twa"


def test_ensemble_save_load(tmp_path, short_setup):
    p, prog, cfg = short_setup
    ens = run_ensemble(WignerSampler.condensate(p), prog, cfg, p, 2, master_seed=3)
    ens.save(tmp_path / "ens")
    files = sorted(x.name for x in (tmp_path / "ens").iterdir())
    assert {"manifest.json", "aggregate.csv", "traj_0000.csv", "traj_0001.npz"} <= set(files)
    back = EnsembleResult.load(tmp_path / "ens")
    assert back.indices == [0, 1] and back.master_seed == 3
    assert np.array_equal(back.mean("N_P"), ens.mean("N_P"))
    header = open(tmp_path / "ens" / "aggregate.csv").readline().strip().split(",")
    assert header[:3] == ["t", "N_P_mean", "N_P_std"]


def synthetic_ensemble(phases, omega=TWO_PI * 10e3, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    t = tone_grid()
    recs = [make_record(np.cos(omega * t + ph) + noise * rng.standard_normal(t.size), n11=np.sin(omega * t + ph))
            for ph in phases]
    return EnsembleResult(recs, list(range(len(recs))))


def test_post_selection_on_antiphase_signals():
    phases = [0.0] * 6 + [np.pi] * 4
    ens = synthetic_ensemble(phases, noise=0.1)
    sel = post_select_by_phase(ens, TWO_PI * 10e3)
    assert sel.success
    assert sel.separation == pytest.approx(np.pi, abs=0.05)
    assert sorted(b.size for b in sel.branches) == [4, 6]
    assert sorted(sel.occupancy) == pytest.approx([0.4, 0.6])
    for b in sel.branches:
        assert np.max(np.abs(b.n_photon)) > 0.9


def test_post_selection_rejects_uniform_phases():
    phases = np.linspace(-np.pi, np.pi, 24, endpoint=False)
    sel = post_select_by_phase(synthetic_ensemble(phases), TWO_PI * 10e3)
    assert not sel.success
    assert "bimodal" in sel.reason
    assert sel.branches == ()


def test_classification_rejects_single_cluster():
    ok, *_, reason = classify_phases(np.full(10, 0.3) + 0.01 * np.arange(10))
    assert not ok


def test_classification_rejects_wrong_separation():
    ok, _, _, sep, _, reason = classify_phases([0.0] * 5 + [2.0] * 5, min_bimodality=0.0)
    assert not ok and "not pi" in reason


def test_two_means_is_rotation_equivariant():
    rng = np.random.default_rng(2)
    base = np.concatenate([0.2 * rng.standard_normal(8), np.pi + 0.2 * rng.standard_normal(7)])
    l1, c1 = two_means_circle(base)
    l2, c2 = two_means_circle(base + 1.0)
    assert sorted(np.bincount(l1)) == sorted(np.bincount(l2))
