import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atommem.channel import MemoryConfig, simulate_plan
from atommem.photon_stats import (
    ClickStream, DetectionChain, correct_input_reference, efficiency_energy,
    efficiency_per_nonempty, g2_ratio, hbt_split, poisson_stream, stream_from_trials,
    write_histogram_csv,
)


def test_stream_sorted_and_validated():
    s = ClickStream([2, 0, 0], [1, 1, 0], [0.3, 0.9, 0.1], n_trials=3)
    assert list(s.rows()) == [(0, "A", 0.1), (0, "B", 0.9), (2, "B", 0.3)]
    with pytest.raises(ValueError):
        ClickStream([0], [0], [-1.0], n_trials=1)


def test_hand_built_coincidences():
    # trial 0: A at 0.2 and B at 0.5 -> one pair at +0.3
    # trial 1: two A clicks, no pair; trial 2: A, B, B -> two pairs
    s = ClickStream([0, 0, 1, 1, 2, 2, 2], [0, 1, 0, 0, 0, 1, 1],
                    [0.2, 0.5, 0.1, 0.2, 1.0, 0.4, 1.2], n_trials=10)
    r = g2_ratio(s, bin_width_us=0.5)
    assert r.n_coincidences == 3
    assert r.n_single == 0
    assert r.coincidences.sum() == 3


def test_single_photons_never_coincide():
    rng = np.random.default_rng(0)
    trials = np.arange(0, 50_000, 3)
    s = hbt_split(trials, np.full(len(trials), 0.4), rng, 50_000)
    r = g2_ratio(s)
    assert r.n_coincidences == 0
    assert r.two_photon_fraction == 0
    assert r.g2_zero == 0


def test_poisson_light_g2_is_one():
    rng = np.random.default_rng(1)
    r = g2_ratio(poisson_stream(0.2, 400_000, rng))
    assert r.g2_zero == pytest.approx(1.0, abs=0.05)


def test_empty_stream_rejected():
    with pytest.raises(ValueError):
        g2_ratio(ClickStream([], [], [], n_trials=5))


def test_histogram_csv(tmp_path):
    rng = np.random.default_rng(2)
    r = g2_ratio(poisson_stream(0.5, 20_000, rng), bin_width_us=0.5)
    path = tmp_path / "g2.csv"
    write_histogram_csv(r, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau_us,coincidences,normalized"
    assert len(lines) == len(r.coincidences) + 1


def test_memory_stream_without_stray_has_no_coincidence():
    cfg = MemoryConfig(p_stray=0.0)
    batch = simulate_plan([("H", 1.0, 0.0, 100_000)], cfg, seed=4)
    r = g2_ratio(stream_from_trials(batch, np.random.default_rng(4)))
    assert r.n_coincidences == 0


def test_efficiency_examples():
    batch = simulate_plan([("R", 1.0, 0.0, 200_000)], MemoryConfig.perfect(), seed=0)
    assert efficiency_energy(batch) == pytest.approx(1 - np.exp(-1), abs=0.005)
    assert efficiency_per_nonempty(batch) == pytest.approx(1.0, abs=0.005)
    assert efficiency_energy(batch, reference_photons=2 * len(batch)) == pytest.approx(
        efficiency_energy(batch) / 2)


def test_efficiency_records_and_batch_agree():
    batch = simulate_plan([("H", 1.0, 0.0, 2000)], MemoryConfig(), seed=9)
    assert efficiency_energy(batch.records()) == efficiency_energy(batch)
    assert efficiency_per_nonempty(batch.records()) == efficiency_per_nonempty(batch)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 5), st.integers(0, 2**31))
def test_per_nonempty_dominates_energy(n_bar, seed):
    batch = simulate_plan([("D", n_bar, 0.0, 500)], MemoryConfig(), seed=seed)
    assert efficiency_per_nonempty(batch) >= efficiency_energy(batch)


def test_detection_chain():
    assert correct_input_reference(0.71 * 0.87) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        DetectionChain(eta_det=0.0)
    with pytest.raises(ValueError):
        correct_input_reference(-1.0)
