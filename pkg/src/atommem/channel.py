"""Single-atom memory channel: stochastic write, storage and read.

Storage is modelled on the Bloch vector of the Zeeman qubit
{|m_F=+1>, |m_F=-1>}, which is identified with the photonic Stokes vector
(R <-> m_F=+1).  Per trial the magnetic noise is quasi-static: one random
field is drawn per trial and held for the whole storage time, so every
individual trial is a rigid rotation and only the ensemble shrinks.

Units: time in us, fields in gauss, frequencies in MHz.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import polarization as pol

READOUT_WINDOW_US = 1.5
PHOTON_DELAY_US = 0.4
PHOTON_JITTER_US = 0.15
BASES = ("1", "2", "3")


@dataclass(frozen=True)
class MemoryConfig:
    """Physical parameters of the memory.

    ``eta_total`` is the energy-ratio write-read efficiency at a mean input
    photon number of one, ``eta_read`` the photon production efficiency of
    the readout.  The per-photon write probability is derived from both (see
    ``write_absorption``).  ``p_stray`` is a per-trial click probability.
    Noise strengths are rms field fluctuations.  The cavity parameters are
    carried along as metadata only.
    """

    eta_total: float = 0.093
    eta_read: float = 0.56
    p_background: float = 0.013
    p_stray: float = 0.003
    b_guide: float = 0.0
    sigma_b_long: float = 1.3468655e-3
    sigma_b_trans: float = 2.1880162e-3
    g_f: float = 0.5
    gyromagnetic: float = 1.3996
    readout_phase: float = 0.0
    cavity_g: float = 2 * math.pi * 5.0
    cavity_kappa: float = 2 * math.pi * 2.5
    cavity_gamma: float = 2 * math.pi * 3.0

    def __post_init__(self):
        for name in ("eta_total", "eta_read", "p_background", "p_stray"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.eta_total > self.eta_read:
            raise ValueError("eta_total cannot exceed eta_read")
        for name in ("b_guide", "sigma_b_long", "sigma_b_trans", "gyromagnetic"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def replace(self, **changes) -> "MemoryConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def perfect(cls) -> "MemoryConfig":
        """Lossless, noiseless memory that absorbs every incoming photon."""
        return cls(eta_total=1.0, eta_read=1.0, p_background=0.0, p_stray=0.0,
                   sigma_b_long=0.0, sigma_b_trans=0.0)

    @property
    def write_absorption(self) -> float:
        """Per-photon storage probability of a Poissonian input.

        Fixed so that retrieved photons (signal plus state-independent
        background, at most one per trial) per input photon equal
        ``eta_total`` at a mean photon number of one.  Capped at 1: even a
        perfect memory cannot store from an empty pulse.
        """
        if self.eta_read == 0:
            return 0.0
        p_signal = max(self.eta_total - self.p_background, 0.0) / (1 - self.p_background) \
            if self.p_background < 1 else 0.0
        p_store = p_signal / self.eta_read
        if p_store >= 1 - math.exp(-1):
            return 1.0
        return -math.log1p(-p_store)

    def p_store(self, n_bar: float) -> float:
        if n_bar < 0:
            raise ValueError("n_bar must be nonnegative")
        return -math.expm1(-n_bar * self.write_absorption)

    @property
    def larmor_mhz(self) -> float:
        return self.g_f * self.gyromagnetic * self.b_guide

    def _rate(self, b: float) -> float:
        # Zeeman coherence of m_F = +-1 precesses at twice the Larmor frequency
        return 2 * math.pi * 2 * self.g_f * self.gyromagnetic * b

    @property
    def precession_rate(self) -> float:
        """Deterministic angular rate of the stored qubit in rad/us."""
        return self._rate(self.b_guide)

    @property
    def dephasing_rate(self) -> float:
        """rms phase per us from longitudinal fluctuations."""
        return self._rate(self.sigma_b_long)

    @property
    def transverse_suppression(self) -> float:
        if self.b_guide <= 0:
            return 1.0
        return min(1.0, self.sigma_b_trans / (2 * self.b_guide))

    @property
    def transverse_rate(self) -> float:
        """rms rotation angle per us from transverse fluctuations."""
        return self._rate(self.sigma_b_trans) * self.transverse_suppression

    def precession_angle(self, t) -> np.ndarray | float:
        return self.precession_rate * t

    def output_weights(self, n_bar: float = 1.0) -> tuple[float, float, float]:
        """Per-trial probabilities of (signal photon, background photon,
        stray-only click)."""
        p_sig = self.p_store(n_bar) * self.eta_read
        p_bg = (1 - p_sig) * self.p_background
        p_str = (1 - p_sig - p_bg) * self.p_stray
        return p_sig, p_bg, p_str


@dataclass(frozen=True)
class AtomicQubit:
    """Bloch vector of the stored Zeeman qubit (m_F=+1 on the +3 pole)."""

    bloch: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bloch, dtype=float)
        if b.shape != (3,) or np.linalg.norm(b) > 1 + 1e-10:
            raise ValueError("atomic Bloch vector must be a 3-vector of length <= 1")
        object.__setattr__(self, "bloch", b)


@dataclass(frozen=True)
class Readout:
    """Result of one readout attempt.

    ``stokes`` is the emitted photon's Stokes vector or ``None``; the signal
    photon and the background photon are mutually exclusive.  ``stray`` is
    an additional unpolarized click that does not consume the photon slot.
    """

    stokes: np.ndarray | None
    background: bool = False
    stray: bool = False

    @property
    def photon(self) -> bool:
        return self.stokes is not None


# ---------------------------------------------------------------------------
# vectorized kernels


def _random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _rotate_z(s: np.ndarray, angle) -> np.ndarray:
    c, si = np.cos(angle), np.sin(angle)
    out = s.copy()
    out[:, 0] = c * s[:, 0] - si * s[:, 1]
    out[:, 1] = si * s[:, 0] + c * s[:, 1]
    return out


def _rotate_axis(s: np.ndarray, axes: np.ndarray, angle: np.ndarray) -> np.ndarray:
    c = np.cos(angle)[:, None]
    si = np.sin(angle)[:, None]
    dot = np.sum(axes * s, axis=1, keepdims=True)
    return s * c + np.cross(axes, s) * si + axes * dot * (1 - c)


def write_batch(stokes: np.ndarray, n_bar: float, cfg: MemoryConfig,
                rng: np.random.Generator) -> np.ndarray:
    """Boolean storage mask for a batch of inputs."""
    return rng.random(len(stokes)) < cfg.p_store(n_bar)


def evolve_batch(bloch: np.ndarray, t, cfg: MemoryConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Quasi-static storage evolution of a batch of Bloch vectors.

    Draw order is fixed (phase noise, rotation axes, rotation angles) so that
    batches are reproducible for a given generator state.
    """
    bloch = np.atleast_2d(np.asarray(bloch, dtype=float))
    n = len(bloch)
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    if np.any(t < 0):
        raise ValueError("storage time must be nonnegative")
    dphi = rng.standard_normal(n) * (cfg.dephasing_rate * t)
    axes = _random_unit_vectors(rng, n)
    theta = rng.standard_normal(n) * (cfg.transverse_rate * t)
    out = _rotate_z(bloch, cfg.precession_angle(t) + dphi)
    return _rotate_axis(out, axes, theta)


@dataclass
class ReadoutBatch:
    stokes: np.ndarray      # (n, 3); zeros where no photon
    signal: np.ndarray
    background: np.ndarray
    stray: np.ndarray
    t_photon: np.ndarray    # offset inside the readout window, nan if none
    t_stray: np.ndarray

    @property
    def photon(self) -> np.ndarray:
        return self.signal | self.background


def read_batch(bloch: np.ndarray, stored: np.ndarray, cfg: MemoryConfig,
               rng: np.random.Generator) -> ReadoutBatch:
    n = len(stored)
    u_sig, u_bg, u_str = rng.random((3, n))
    bg_dirs = _random_unit_vectors(rng, n)
    t_ph = np.clip(PHOTON_DELAY_US + PHOTON_JITTER_US * rng.standard_normal(n),
                   0.0, READOUT_WINDOW_US)
    t_st = rng.random(n) * READOUT_WINDOW_US

    signal = stored & (u_sig < cfg.eta_read)
    background = ~signal & (u_bg < cfg.p_background)
    stray = u_str < cfg.p_stray

    stokes = np.zeros((n, 3))
    if np.any(signal):
        emitted = _rotate_z(np.atleast_2d(bloch)[signal], cfg.readout_phase)
        stokes[signal] = emitted
    stokes[background] = bg_dirs[background]
    photon = signal | background
    return ReadoutBatch(
        stokes=stokes,
        signal=signal,
        background=background,
        stray=stray,
        t_photon=np.where(photon, t_ph, np.nan),
        t_stray=np.where(stray, t_st, np.nan),
    )


# ---------------------------------------------------------------------------
# single-trial API


def write(psi: pol.JonesVector, n_bar: float, cfg: MemoryConfig,
          rng: np.random.Generator) -> AtomicQubit | None:
    """Attempt to store a photonic qubit; ``None`` if nothing was absorbed."""
    s = pol.stokes_of(psi)
    if not write_batch(s[None, :], n_bar, cfg, rng)[0]:
        return None
    return AtomicQubit(s)


def evolve(q: AtomicQubit, t: float, cfg: MemoryConfig,
           rng: np.random.Generator) -> AtomicQubit:
    out = evolve_batch(q.bloch[None, :], t, cfg, rng)[0]
    norm = np.linalg.norm(out)
    if norm > 1:
        out = out / norm
    return AtomicQubit(out)


def read(q: AtomicQubit | None, cfg: MemoryConfig,
         rng: np.random.Generator) -> Readout:
    bloch = np.zeros((1, 3)) if q is None else q.bloch[None, :]
    r = read_batch(bloch, np.array([q is not None]), cfg, rng)
    stokes = r.stokes[0] if r.photon[0] else None
    return Readout(stokes=stokes, background=bool(r.background[0]), stray=bool(r.stray[0]))


# ---------------------------------------------------------------------------
# analytic ensemble


def bloch_transfer(t: float, cfg: MemoryConfig) -> np.ndarray:
    """Ensemble-averaged 3x3 map applied to a stored Bloch vector.

    Longitudinal phase noise shrinks the equatorial plane by
    ``exp(-sigma_phi^2 / 2)``; the isotropic transverse rotation shrinks all
    components by ``(1 + 2 exp(-sigma_theta^2 / 2)) / 3``.
    """
    if t < 0:
        raise ValueError("storage time must be nonnegative")
    d = math.exp(-0.5 * (cfg.dephasing_rate * t) ** 2)
    c = math.exp(-0.5 * (cfg.transverse_rate * t) ** 2)
    shrink = (1 + 2 * c) / 3
    rot = pol.rotation_matrix(pol.CIRCULAR_AXIS, cfg.precession_angle(t) + cfg.readout_phase)
    return shrink * rot @ np.diag([d, d, 1.0])


def output_stokes(s_in, t: float, cfg: MemoryConfig, n_bar: float = 1.0) -> np.ndarray:
    p_sig, p_bg, p_str = cfg.output_weights(n_bar)
    total = p_sig + p_bg + p_str
    if total <= 0:
        raise ValueError("configuration never produces an output click")
    return (p_sig / total) * (bloch_transfer(t, cfg) @ np.asarray(s_in, dtype=float))


def channel_density(rho_in, t: float, cfg: MemoryConfig, n_bar: float = 1.0) -> np.ndarray:
    """Ensemble-averaged output state conditioned on an output click.

    Background photons and stray-only clicks carry no polarization and mix
    the retrieved state toward I/2 with their share of all output events.
    """
    rho_in = pol.check_density(rho_in)
    return pol.from_stokes(output_stokes(pol.to_stokes(rho_in), t, cfg, n_bar))


def expected_fidelities(t: float, cfg: MemoryConfig, n_bar: float = 1.0,
                        compensate: bool = False) -> dict[str, float]:
    """Analytic fidelity of every canonical input after storage time ``t``."""
    out = {}
    back = -cfg.precession_angle(t) if compensate else 0.0
    for label, psi in pol.canonical_states():
        s_ideal = pol.stokes_of(psi)
        s_out = output_stokes(s_ideal, t, cfg, n_bar)
        if compensate:
            s_out = pol.rotate_stokes(s_out, pol.CIRCULAR_AXIS, back)
        out[label] = 0.5 * (1 + float(s_out @ s_ideal))
    return out


# ---------------------------------------------------------------------------
# trial plans


@dataclass(frozen=True)
class PlanEntry:
    input_label: str
    n_bar: float
    storage_time: float
    repetitions: int


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    input_label: str
    n_bar: float
    storage_time: float
    stored: bool
    basis: int
    stokes: np.ndarray | None = field(default=None, compare=False)
    outcome: int = 0
    t_photon_us: float | None = None
    t_stray_us: float | None = None
    background_flag: bool = False
    stray_flag: bool = False

    @property
    def photon(self) -> bool:
        return self.stokes is not None

    @property
    def clicked(self) -> bool:
        return self.photon or self.stray_flag

    @property
    def t_click_us(self) -> float | None:
        return self.t_photon_us if self.photon else self.t_stray_us


@dataclass
class TrialBatch:
    """Column store of simulated trials; one row per write-store-read attempt."""

    input_label: np.ndarray
    n_bar: np.ndarray
    t_us: np.ndarray
    stored: np.ndarray
    basis: np.ndarray
    stokes: np.ndarray
    photon: np.ndarray
    background: np.ndarray
    stray: np.ndarray
    outcome: np.ndarray
    t_photon: np.ndarray
    t_stray: np.ndarray

    def __len__(self):
        return len(self.stored)

    @property
    def clicked(self) -> np.ndarray:
        return self.photon | self.stray

    @property
    def signal(self) -> np.ndarray:
        return self.photon & ~self.background

    @classmethod
    def concatenate(cls, batches: Sequence["TrialBatch"]) -> "TrialBatch":
        names = [f.name for f in dataclasses.fields(cls)]
        return cls(**{k: np.concatenate([getattr(b, k) for b in batches]) for k in names})

    def select(self, mask) -> "TrialBatch":
        names = [f.name for f in dataclasses.fields(self)]
        return type(self)(**{k: getattr(self, k)[mask] for k in names})

    def records(self) -> list[TrialRecord]:
        out = []
        for i in range(len(self)):
            photon = bool(self.photon[i])
            out.append(TrialRecord(
                trial_id=i,
                input_label=str(self.input_label[i]),
                n_bar=float(self.n_bar[i]),
                storage_time=float(self.t_us[i]),
                stored=bool(self.stored[i]),
                basis=int(self.basis[i]),
                stokes=self.stokes[i].copy() if photon else None,
                outcome=int(self.outcome[i]),
                t_photon_us=float(self.t_photon[i]) if photon else None,
                t_stray_us=float(self.t_stray[i]) if self.stray[i] else None,
                background_flag=bool(self.background[i]),
                stray_flag=bool(self.stray[i]),
            ))
        return out

    def write_csv(self, path) -> None:
        write_records_csv(self.records(), path)


def entry_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for plan entry ``index`` of a seeded run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_entry(entry: PlanEntry, cfg: MemoryConfig,
                   rng: np.random.Generator) -> TrialBatch:
    if entry.repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if entry.storage_time < 0:
        raise ValueError("storage time must be nonnegative")
    n = entry.repetitions
    s_in = np.tile(pol.stokes_of(pol.state(entry.input_label)), (n, 1))

    stored = write_batch(s_in, entry.n_bar, cfg, rng)
    bloch = evolve_batch(s_in, entry.storage_time, cfg, rng)
    r = read_batch(bloch, stored, cfg, rng)

    # analysis basis cycles 1, 2, 3 within the entry
    basis = np.arange(n) % 3
    photon = r.photon
    p_plus = np.where(photon, 0.5 * (1 + r.stokes[np.arange(n), basis]), 0.5)
    u = rng.random(n)
    outcome = np.where(u < p_plus, 1, -1)
    outcome = np.where(photon | r.stray, outcome, 0)

    return TrialBatch(
        input_label=np.full(n, entry.input_label),
        n_bar=np.full(n, float(entry.n_bar)),
        t_us=np.full(n, float(entry.storage_time)),
        stored=stored,
        basis=basis + 1,
        stokes=r.stokes,
        photon=photon,
        background=r.background,
        stray=r.stray,
        outcome=outcome,
        t_photon=entry.storage_time + r.t_photon,
        t_stray=entry.storage_time + r.t_stray,
    )


def _as_entry(item) -> PlanEntry:
    if isinstance(item, PlanEntry):
        entry = item
    else:
        entry = PlanEntry(*item)
    pol.state(entry.input_label)
    if entry.repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if entry.n_bar < 0:
        raise ValueError("n_bar must be nonnegative")
    return entry


def simulate_plan(plan: Iterable, cfg: MemoryConfig, seed: int) -> TrialBatch:
    entries = [_as_entry(p) for p in plan]
    if not entries:
        raise ValueError("empty trial plan")
    return TrialBatch.concatenate(
        [simulate_entry(e, cfg, entry_rng(seed, i)) for i, e in enumerate(entries)])


def run_trials(plan: Iterable, cfg: MemoryConfig, seed: int) -> list[TrialRecord]:
    """Simulate a plan of ``(input_label, n_bar, storage_time, repetitions)``."""
    return simulate_plan(plan, cfg, seed).records()


# ---------------------------------------------------------------------------
# file formats

CSV_COLUMNS = ("trial_id", "input_label", "n_bar", "t_us", "stored", "clicked",
               "basis", "outcome", "t_click_us", "background", "stray")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_records_csv(records: Iterable[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in (
                r.trial_id, r.input_label, r.n_bar, r.storage_time, r.stored,
                r.clicked, r.basis, r.outcome, r.t_click_us, r.background_flag,
                r.stray_flag)])


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


_FIELDS = {f.name: f for f in dataclasses.fields(MemoryConfig)}


def parse_config(text: str) -> MemoryConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[memory]\n" + text)
    except configparser.Error as exc:
        raise ValueError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in parser["memory"].items():
        if key not in _FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        try:
            values[key] = float(raw)
        except ValueError:
            raise ValueError(f"config key {key!r}: not a number: {raw!r}") from None
    return MemoryConfig(**values)


def load_config(path) -> MemoryConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: MemoryConfig) -> str:
    return "".join(f"{k} = {getattr(cfg, k)!r}\n" for k in _FIELDS)


def save_config(cfg: MemoryConfig, path) -> None:
    Path(path).write_text(format_config(cfg))
