import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atommem import polarization as pol
from atommem.channel import (
    AtomicQubit, MemoryConfig, PlanEntry, bloch_transfer, channel_density, entry_rng,
    evolve, evolve_batch, expected_fidelities, format_config, load_config, parse_config,
    read, read_batch, read_records_csv, run_trials, save_config, simulate_plan, write,
)

DEFAULT = MemoryConfig()


def test_default_config_round_trip(tmp_path):
    path = tmp_path / "m.cfg"
    save_config(DEFAULT, path)
    assert load_config(path) == DEFAULT
    assert parse_config(format_config(DEFAULT)) == DEFAULT


def test_shipped_config_matches_defaults():
    from pathlib import Path
    cfg = load_config(Path(__file__).parents[1] / "configs" / "default.cfg")
    assert cfg == DEFAULT


def test_config_rejects_bad_input():
    with pytest.raises(ValueError):
        parse_config("eta_total = 0.1\nbogus = 3\n")
    with pytest.raises(ValueError):
        parse_config("eta_total = lots\n")
    with pytest.raises(ValueError):
        parse_config("eta_total = 0.9\neta_read = 0.5\n")
    with pytest.raises(ValueError):
        MemoryConfig(p_stray=1.5)
    with pytest.raises(ValueError):
        MemoryConfig(sigma_b_long=-1e-3)


def test_config_comments_and_partial():
    cfg = parse_config("# guided\nb_guide = 0.034  # gauss\n")
    assert cfg.b_guide == 0.034
    assert cfg.eta_total == DEFAULT.eta_total


def test_larmor_period_value():
    cfg = DEFAULT.replace(b_guide=0.034)
    # 1 / (2 * 0.5 * 1.3996 * 0.034) us, evaluated independently
    assert 2 * math.pi / cfg.precession_rate == pytest.approx(21.014407477766756, rel=1e-12)


def test_write_probability_monotone_and_bounded():
    values = [DEFAULT.p_store(n) for n in np.linspace(0, 10, 41)]
    assert values[0] == 0
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert all(0 <= v <= 1 for v in values)
    assert MemoryConfig.perfect().p_store(1.0) == pytest.approx(1 - math.exp(-1))


def test_write_returns_none_or_input_state():
    rng = np.random.default_rng(1)
    psi = pol.state("D")
    results = [write(psi, 1.0, DEFAULT, rng) for _ in range(2000)]
    stored = [q for q in results if q is not None]
    assert 0 < len(stored) < len(results)
    for q in stored[:20]:
        np.testing.assert_allclose(q.bloch, [0, 1, 0])


def test_evolve_zero_time_is_identity():
    rng = np.random.default_rng(2)
    q = AtomicQubit(np.array([0.6, 0.0, 0.8]))
    np.testing.assert_allclose(evolve(q, 0.0, DEFAULT, rng).bloch, q.bloch, atol=1e-15)


def test_evolve_rejects_negative_time():
    with pytest.raises(ValueError):
        evolve_batch(np.array([[1.0, 0, 0]]), -1.0, DEFAULT, np.random.default_rng(0))


@settings(max_examples=50)
@given(st.floats(0, 500), st.integers(0, 2**32 - 1))
def test_evolution_preserves_norm(t, seed):
    rng = np.random.default_rng(seed)
    s = np.array([[1.0, 0, 0], [0, 0, 1.0], [0.0, 0.6, 0.8]])
    out = evolve_batch(s, t, DEFAULT.replace(b_guide=0.034), rng)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1, atol=1e-12)


def test_guided_field_precesses_equator_only():
    cfg = DEFAULT.replace(b_guide=0.034, sigma_b_long=0.0, sigma_b_trans=0.0)
    rng = np.random.default_rng(0)
    quarter = 21.014407477766756 / 4
    out = evolve_batch(np.array([[1.0, 0, 0], [0, 0, 1.0]]), quarter, cfg, rng)
    np.testing.assert_allclose(out, [[0, 1, 0], [0, 0, 1]], atol=1e-12)


def test_read_without_atom_background_statistics():
    cfg = DEFAULT.replace(eta_read=0.0, eta_total=0.0)
    rng = np.random.default_rng(5)
    n = 200_000
    r = read_batch(np.zeros((n, 3)), np.zeros(n, bool), cfg, rng)
    assert not r.signal.any()
    assert r.background.mean() == pytest.approx(0.013, abs=0.001)
    assert r.stray.mean() == pytest.approx(0.003, abs=0.0005)
    # unpolarized on average
    np.testing.assert_allclose(r.stokes[r.background].mean(axis=0), 0, atol=0.02)


def test_read_scalar_api():
    rng = np.random.default_rng(3)
    cfg = MemoryConfig.perfect()
    r = read(AtomicQubit(np.array([0, 0, 1.0])), cfg, rng)
    assert r.photon and not r.background and not r.stray
    np.testing.assert_allclose(r.stokes, [0, 0, 1])
    assert not read(None, cfg, rng).photon


def test_circular_at_least_linear():
    for t in (0, 2, 20, 80, 200):
        f = expected_fidelities(t, DEFAULT)
        for circ in ("R", "L"):
            for lin in ("H", "V", "D", "A"):
                assert f[circ] >= f[lin] - 1e-15


def test_bloch_transfer_zero_time_noiseless():
    np.testing.assert_allclose(bloch_transfer(0.0, DEFAULT), np.eye(3), atol=1e-15)


@st.composite
def density(draw):
    v = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(v)
    return pol.from_stokes(v / n if n > 1 else v)


@settings(max_examples=60)
@given(density(), st.floats(0, 1000), st.floats(0, 5),
       st.floats(0, 0.1), st.floats(0, 0.01), st.floats(0, 0.01))
def test_channel_output_is_a_state(rho, t, n_bar, b, s_long, s_trans):
    cfg = DEFAULT.replace(b_guide=b, sigma_b_long=s_long, sigma_b_trans=s_trans)
    out = channel_density(rho, t, cfg, n_bar=max(n_bar, 1e-3))
    pol.check_density(out)


def test_channel_is_contractive():
    rho = pol.to_density(pol.state("H"))
    prev = 1.0
    for t in (0, 10, 40, 80, 160, 400):
        s = np.linalg.norm(pol.to_stokes(channel_density(rho, t, DEFAULT)))
        assert s <= prev + 1e-12
        prev = s


def test_plan_determinism_and_independence():
    plan = [("H", 1.0, 10.0, 500), ("R", 1.0, 40.0, 500)]
    a = simulate_plan(plan, DEFAULT, seed=7)
    b = simulate_plan(plan, DEFAULT, seed=7)
    c = simulate_plan(plan, DEFAULT, seed=8)
    np.testing.assert_array_equal(a.outcome, b.outcome)
    assert not np.array_equal(a.outcome, c.outcome)
    # appending an entry does not disturb earlier ones
    d = simulate_plan(plan + [("L", 1.0, 0.0, 100)], DEFAULT, seed=7)
    np.testing.assert_array_equal(d.outcome[:1000], a.outcome)


def test_entry_rng_streams_differ():
    assert entry_rng(0, 0).random() != entry_rng(0, 1).random()


def test_plan_validation():
    with pytest.raises(ValueError):
        simulate_plan([], DEFAULT, 0)
    with pytest.raises(ValueError):
        simulate_plan([("Q", 1.0, 0.0, 10)], DEFAULT, 0)
    with pytest.raises(ValueError):
        simulate_plan([("H", 1.0, 0.0, 0)], DEFAULT, 0)
    with pytest.raises(ValueError):
        simulate_plan([PlanEntry("H", 1.0, -1.0, 10)], DEFAULT, 0)


def test_records_consistency(tmp_path):
    records = run_trials([("A", 1.0, 5.0, 3000)], DEFAULT, seed=1)
    for r in records:
        if r.photon:
            assert r.clicked and r.outcome in (-1, 1)
            assert r.storage_time <= r.t_photon_us <= r.storage_time + 1.5
        elif r.stray_flag:
            assert r.outcome in (-1, 1)
        else:
            assert r.outcome == 0 and not r.clicked
        if r.background_flag:
            assert r.photon
        assert r.basis in (1, 2, 3)
    from atommem.channel import write_records_csv
    path = tmp_path / "trials.csv"
    write_records_csv(records, path)
    rows = read_records_csv(path)
    assert len(rows) == len(records)
    assert sum(row["clicked"] == "1" for row in rows) == sum(r.clicked for r in records)


def test_photon_outcomes_follow_stokes():
    cfg = MemoryConfig.perfect()
    batch = simulate_plan([("H", 1.0, 0.0, 30_000)], cfg, seed=3)
    clicked = batch.photon
    for b, expected in ((1, 1.0), (2, 0.0), (3, 0.0)):
        sel = clicked & (batch.basis == b)
        assert batch.outcome[sel].mean() == pytest.approx(expected, abs=0.03)
