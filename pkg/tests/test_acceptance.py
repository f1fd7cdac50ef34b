"""Acceptance criteria, each at its stated tolerance.

Every test reports one PASS/FAIL line (collected in the terminal summary).
"""

import time

import numpy as np
import pytest

from atommem import harness as h
from atommem import polarization as pol
from atommem.bounds import ClassicalBoundQuery, f_coh, f_mp, intercept_resend_mc, max_classical_fidelity
from atommem.channel import (
    MemoryConfig, PlanEntry, channel_density, entry_rng, save_config, simulate_entry, simulate_plan,
)
from atommem.photon_stats import (
    efficiency_energy, efficiency_per_nonempty, g2_ratio, stream_from_trials,
)
from atommem.tomography import apply_process, canonical_pairs, chi_from_kraus, reconstruct_process


def _random_kraus(rng, n_ops):
    g = rng.standard_normal((2 * n_ops, 2)) + 1j * rng.standard_normal((2 * n_ops, 2))
    q, _ = np.linalg.qr(g)
    return [q[2 * k:2 * k + 2, :] for k in range(n_ops)]


@pytest.fixture(scope="module")
def calibrated(tmp_path_factory):
    path = tmp_path_factory.mktemp("cal") / "calibrated.cfg"
    save_config(h.calibrate().config, path)
    return path


def test_01_classical_bound_exactness(report):
    start = time.perf_counter()
    mp = f_mp(1)
    coh = f_coh(1.0)
    bound = max_classical_fidelity(ClassicalBoundQuery(1.0, 0.093))
    elapsed = time.perf_counter() - start
    ok = mp == 2 / 3 and abs(coh - 0.709) <= 0.0005 and abs(bound - 0.801) <= 0.002 and elapsed < 1
    report("1 classical bounds", ok,
           f"f_mp(1)={mp!r} f_coh(1)={coh:.5f} F_max(1,0.093)={bound:.5f} in {elapsed:.3f}s")


def test_02_intercept_resend(report):
    start = time.perf_counter()
    f = intercept_resend_mc(10**6, np.random.default_rng(2))
    elapsed = time.perf_counter() - start
    report("2 intercept-resend MC", abs(f - 0.6667) <= 0.002 and elapsed < 10,
           f"F={f:.5f} (analytic 2/3) in {elapsed:.2f}s")


def test_03_tomography_oracle(report):
    rng = np.random.default_rng(3)
    worst_chi = 0.0
    worst_round_trip = -np.inf
    for k in range(120):
        kraus = _random_kraus(rng, 1 + k % 4)
        pairs = canonical_pairs(lambda r: sum(a @ r @ a.conj().T for a in kraus))
        pm = reconstruct_process(pairs)
        worst_chi = max(worst_chi, np.abs(pm.chi - chi_from_kraus(kraus)).max())
        for rho_in, rho_out in pairs:
            excess = np.abs(apply_process(pm, rho_in) - rho_out).max() - pm.residual
            worst_round_trip = max(worst_round_trip, excess)
    ok = worst_chi < 1e-8 and worst_round_trip <= 1e-12
    report("3 tomography oracle", ok,
           f"120 channels, max |chi err|={worst_chi:.2e}, round-trip excess={worst_round_trip:.2e}")


def test_04_dephasing_chi(report):
    worst = 0.0
    for lam in (0.0, 0.25, 0.5, 1.0):
        chan = lambda r: (1 + lam) / 2 * r + (1 - lam) / 2 * pol.SZ @ r @ pol.SZ
        chi = reconstruct_process(canonical_pairs(chan)).chi
        worst = max(worst, abs(chi[0, 0] - (1 + lam) / 2), abs(chi[3, 3] - (1 - lam) / 2))
    report("4 dephasing chi", worst < 1e-8, f"max deviation {worst:.2e}")


def test_05_larmor_period(report, tmp_path):
    start = time.perf_counter()
    s = h.run(h.ExperimentSpec("fidelity_vs_time_guided", trials=10_000, guide_field=0.034,
                               out=str(tmp_path)))
    elapsed = time.perf_counter() - start
    period = s["oscillation_period_us"]
    ok = period is not None and abs(period - 21.0) <= 1 and elapsed < 60
    report("5 Larmor period", ok, f"period={period:.3f} us in {elapsed:.1f}s")


def test_06_calibrated_decay(report, calibrated, tmp_path):
    """Calibration-consistency check: the targets were the calibration inputs."""
    unguided = h.run(h.ExperimentSpec("fidelity_vs_time", config=str(calibrated),
                                      trials=10_000, out=str(tmp_path / "u")))
    short = h.run(h.ExperimentSpec("fidelity_vs_time", config=str(calibrated), trials=400_000,
                                   times=(2.0,), out=str(tmp_path / "s")))
    guided = h.run(h.ExperimentSpec("fidelity_vs_time_guided", config=str(calibrated),
                                    trials=10_000, compensate=True, out=str(tmp_path / "g")))
    t_u = unguided["crossing_us"]
    f2 = short["average_fidelity"]["2.0"]
    t_g = guided["crossing_us"]
    ok = (t_u is not None and abs(t_u - 82) <= 8 and abs(f2 - 0.927) <= 0.01
          and t_g is not None and t_g >= 164)
    report("6 calibrated decay (calibration-consistency)", ok,
           f"crossing={t_u:.1f} us, F(2us)={f2:.4f}, guided+compensated crossing={t_g:.1f} us")


def test_07_efficiency_definitions(report):
    perfect = simulate_plan([("H", 1.0, 0.0, 200_000)], MemoryConfig.perfect(), seed=71)
    config = simulate_plan([("H", 1.0, 0.0, 200_000)], MemoryConfig(), seed=72)
    e_perfect = efficiency_energy(perfect)
    e_config = efficiency_energy(config)
    datasets = [perfect, config]
    rng = np.random.default_rng(7)
    for k in range(10):
        n_bar = float(rng.uniform(0.05, 5))
        cfg = MemoryConfig(eta_total=float(rng.uniform(0.01, 0.5)), eta_read=0.6)
        datasets.append(simulate_plan([("D", n_bar, 0.0, 5000)], cfg, seed=100 + k))
    dominates = all(efficiency_per_nonempty(d) >= efficiency_energy(d) for d in datasets)
    ok = abs(e_perfect - 0.632) <= 0.005 and abs(e_config - 0.093) <= 0.003 and dominates
    report("7 efficiency definitions", ok,
           f"perfect={e_perfect:.4f} config={e_config:.4f} per-nonempty>=energy on "
           f"{len(datasets)} datasets: {dominates}")


def _g2(cfg, seed, trials=100_000):
    batches = [simulate_entry(PlanEntry(label, 1.0, 2.0, trials), cfg, entry_rng(seed, k))
               for k, label in enumerate(pol.LABELS)]
    from atommem.channel import TrialBatch
    batch = TrialBatch.concatenate(batches)
    return g2_ratio(stream_from_trials(batch, entry_rng(seed, len(batches))))


def test_08a_antibunching_two_photon_fraction(report):
    res = _g2(MemoryConfig(), seed=8)
    frac = res.two_photon_fraction
    report("8a two-photon fraction", abs(frac - 0.005) <= 0.002,
           f"fraction={frac:.4f} ({res.n_coincidences} coincidences / {res.n_single} single-click "
           f"trials), target 0.005 +- 0.002")


def test_08b_antibunching_no_stray(report):
    res = _g2(MemoryConfig(p_stray=0.0), seed=8)
    report("8b zero coincidences without stray clicks", res.n_coincidences == 0,
           f"{res.n_coincidences} same-trial coincidences")


def test_09_mc_vs_analytic(report):
    cfg = MemoryConfig()
    worst = 0.0
    for k, t in enumerate((0.0, 20.0, 80.0)):
        for j, label in enumerate(pol.LABELS):
            b = simulate_entry(PlanEntry(label, 1.0, t, 10**6), cfg, entry_rng(9, 10 * k + j))
            s = b.stokes[b.clicked]
            mean = s.mean(axis=0)
            sem = s.std(axis=0, ddof=1) / np.sqrt(len(s))
            expected = pol.to_stokes(channel_density(pol.to_density(pol.state(label)), t, cfg))
            worst = max(worst, float(np.max(np.abs(mean - expected) / sem)))
    report("9 MC vs analytic channel", worst <= 3, f"max |z| over 54 components = {worst:.2f}")


def test_10_determinism(report, tmp_path):
    specs = [
        ("fidelity_vs_time", dict(times=(0, 20, 40, 60, 80))),
        ("fidelity_vs_time_guided", dict(times=(0, 8, 16, 24, 32, 40))),
        ("process_tomo", {}),
        ("threshold_surface", {}),
        ("g2", {}),
        ("efficiency", {}),
    ]
    mismatched = []
    n_files = 0
    for name, extra in specs:
        for run in ("a", "b"):
            h.run(h.ExperimentSpec(name, seed=1234, trials=2000, out=str(tmp_path / run), **extra))
    for f in sorted((tmp_path / "a").glob("*.csv")):
        n_files += 1
        if f.read_bytes() != (tmp_path / "b" / f.name).read_bytes():
            mismatched.append(f.name)
    report("10 determinism", n_files >= 7 and not mismatched,
           f"{n_files} CSVs compared, mismatched: {mismatched or 'none'}")
