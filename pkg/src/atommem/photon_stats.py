"""Click-stream statistics: HBT coincidences, efficiencies, detection chain."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import READOUT_WINDOW_US, TrialBatch


@dataclass
class ClickStream:
    """Detector clicks of a pulsed experiment.

    Rows are ``(trial_id, detector, timestamp_us)`` with detector 0 = A and
    1 = B, sorted by trial and then by time.  ``n_trials`` counts all
    trials, including those without any click.
    """

    trial_id: np.ndarray
    detector: np.ndarray
    timestamp: np.ndarray
    n_trials: int

    def __post_init__(self):
        self.trial_id = np.asarray(self.trial_id, dtype=np.int64)
        self.detector = np.asarray(self.detector, dtype=np.int8)
        self.timestamp = np.asarray(self.timestamp, dtype=float)
        if np.any(self.timestamp < 0):
            raise ValueError("timestamps must be nonnegative")
        order = np.lexsort((self.timestamp, self.trial_id))
        self.trial_id = self.trial_id[order]
        self.detector = self.detector[order]
        self.timestamp = self.timestamp[order]

    def __len__(self):
        return len(self.trial_id)

    def rows(self):
        for t, d, ts in zip(self.trial_id, self.detector, self.timestamp):
            yield int(t), "AB"[d], float(ts)


def hbt_split(photon_trials, photon_times, rng: np.random.Generator, n_trials: int,
              stray_trials=(), stray_times=(), p_dark: float = 0.0,
              window_us: float = READOUT_WINDOW_US) -> ClickStream:
    """Route photons through a 50:50 beam splitter onto detectors A and B.

    Stray clicks given explicitly land on a random detector.  ``p_dark``
    optionally adds further dark counts per trial, uniform in the window.
    """
    photon_trials = np.asarray(photon_trials, dtype=np.int64)
    photon_times = np.asarray(photon_times, dtype=float)
    stray_trials = np.asarray(stray_trials, dtype=np.int64)
    stray_times = np.asarray(stray_times, dtype=float)
    det_ph = rng.integers(0, 2, len(photon_trials))
    det_st = rng.integers(0, 2, len(stray_trials))
    parts_t = [photon_trials, stray_trials]
    parts_d = [det_ph, det_st]
    parts_s = [photon_times, stray_times]
    if p_dark > 0:
        dark = np.flatnonzero(rng.random(n_trials) < p_dark)
        parts_t.append(dark)
        parts_d.append(rng.integers(0, 2, len(dark)))
        parts_s.append(rng.random(len(dark)) * window_us)
    return ClickStream(np.concatenate(parts_t), np.concatenate(parts_d),
                       np.concatenate(parts_s), n_trials)


def stream_from_trials(batch: TrialBatch, rng: np.random.Generator) -> ClickStream:
    """HBT click stream of simulated memory trials (photon plus stray clicks)."""
    idx = np.arange(len(batch))
    return hbt_split(idx[batch.photon], batch.t_photon[batch.photon], rng, len(batch),
                     stray_trials=idx[batch.stray], stray_times=batch.t_stray[batch.stray])


def poisson_stream(n_bar: float, n_trials: int, rng: np.random.Generator,
                   window_us: float = READOUT_WINDOW_US) -> ClickStream:
    """Coherent-state control source: Poisson photon number per trial."""
    k = rng.poisson(n_bar, n_trials)
    trials = np.repeat(np.arange(n_trials), k)
    times = rng.random(len(trials)) * window_us
    return hbt_split(trials, times, rng, n_trials)


@dataclass
class G2Result:
    bin_edges: np.ndarray
    coincidences: np.ndarray
    normalized: np.ndarray
    two_photon_fraction: float
    g2_zero: float
    n_coincidences: int
    n_single: int

    def csv_rows(self):
        centers = 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])
        yield ["tau_us", "coincidences", "normalized"]
        for c, n, g in zip(centers, self.coincidences, self.normalized):
            yield [repr(float(c)), int(n), repr(float(g))]


def g2_ratio(stream: ClickStream, bin_width_us: float = 1.0,
             max_tau_us: float | None = None) -> G2Result:
    """Trial-local A-B coincidence statistics.

    Every pair of an A click and a B click in the same trial is one
    coincidence at delay ``t_B - t_A``.  ``two_photon_fraction`` divides the
    number of coincidences by the number of trials with exactly one click.
    ``g2_zero`` compares the coincidence rate with the product of the
    single-detector rates (1 for Poisson light, 0 for a single photon).
    The histogram is normalized by the same uncorrelated expectation.
    """
    if len(stream) == 0:
        raise ValueError("empty click stream")
    n = stream.n_trials
    na = np.bincount(stream.trial_id[stream.detector == 0], minlength=n)
    nb = np.bincount(stream.trial_id[stream.detector == 1], minlength=n)
    pairs = na * nb
    n_coinc = int(pairs.sum())
    n_single = int(np.sum(na + nb == 1))

    delays = []
    trials = np.flatnonzero(pairs)
    lo = np.searchsorted(stream.trial_id, trials, side="left")
    hi = np.searchsorted(stream.trial_id, trials, side="right")
    for a, b in zip(lo, hi):
        d = stream.detector[a:b]
        ts = stream.timestamp[a:b]
        delays.append((ts[d == 1][None, :] - ts[d == 0][:, None]).ravel())
    delays = np.concatenate(delays) if delays else np.zeros(0)

    if max_tau_us is None:
        max_tau_us = READOUT_WINDOW_US
    half = np.ceil(max_tau_us / bin_width_us) * bin_width_us
    edges = np.arange(-half, half + bin_width_us / 2, bin_width_us)
    hist, edges = np.histogram(delays, bins=edges)

    expected = na.sum() * nb.sum() / n
    g2_zero = n_coinc / expected if expected > 0 else float("nan")
    # uncorrelated A-B pairs with uniform arrival spread over the histogram span
    per_bin = expected / len(hist) if expected > 0 else float("nan")
    normalized = hist / per_bin if expected > 0 else np.full(len(hist), np.nan)
    frac = n_coinc / n_single if n_single else float("nan")
    return G2Result(edges, hist, normalized, frac, g2_zero, n_coinc, n_single)


def write_histogram_csv(result: G2Result, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(result.csv_rows())


# ---------------------------------------------------------------------------
# efficiencies


def _photon_and_nbar(records):
    if isinstance(records, TrialBatch):
        return records.photon.astype(float), records.n_bar
    photon = np.array([r.photon for r in records], dtype=float)
    n_bar = np.array([r.n_bar for r in records], dtype=float)
    return photon, n_bar


def efficiency_energy(records, reference_photons=None) -> float:
    """Retrieved photons per impinging photon.

    The input energy is the sum of the mean photon numbers, or the measured
    ``reference_photons`` total when given.
    """
    photon, n_bar = _photon_and_nbar(records)
    energy = n_bar.sum() if reference_photons is None else float(reference_photons)
    if energy <= 0:
        raise ValueError("zero input energy")
    return float(photon.sum() / energy)


def efficiency_per_nonempty(records) -> float:
    """Retrieved photons per non-empty input pulse."""
    photon, n_bar = _photon_and_nbar(records)
    nonempty = -np.expm1(-n_bar).sum()
    if nonempty <= 0:
        raise ValueError("zero input energy")
    return float(photon.sum() / nonempty)


@dataclass(frozen=True)
class DetectionChain:
    r_resonant: float = 0.71
    r_detpath: float = 0.87
    t_outcoupler: float = 0.92
    eta_det: float = 0.41

    def __post_init__(self):
        for name in ("r_resonant", "r_detpath", "t_outcoupler", "eta_det"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")


def correct_input_reference(raw_reflected: float, chain: DetectionChain = DetectionChain()) -> float:
    """Input energy from the reflection off the resonant cavity."""
    if raw_reflected < 0:
        raise ValueError("raw reflected signal must be nonnegative")
    return raw_reflected / (chain.r_resonant * chain.r_detpath)
