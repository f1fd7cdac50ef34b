"""Fidelity bounds for classical (measure-and-prepare) memories.

A classical memory probed with coherent pulses of mean photon number
``n_bar`` sees ``N`` photons with Poisson probability and can reach
fidelity ``(N + 1) / (N + 2)`` on an ``N``-photon pulse.  By staying silent
on pulses with few photons it trades efficiency for fidelity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

TAIL_MASS = 1e-12


def f_mp(n: int) -> float:
    if n < 1:
        raise ValueError("photon number must be at least 1")
    return (n + 1) / (n + 2)


def poisson_pmf(n_bar: float, n: int) -> float:
    if n_bar < 0 or n < 0:
        raise ValueError("n_bar and N must be nonnegative")
    if n_bar == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(n_bar) - n_bar - math.lgamma(n + 1))


def _terms(n_bar: float):
    """Yield ``(N, p(N))`` for N >= 1 until the remaining mass is negligible."""
    remaining = 1.0 - poisson_pmf(n_bar, 0)
    n = 1
    while True:
        p = poisson_pmf(n_bar, n)
        yield n, p
        remaining -= p
        if n > n_bar and remaining < TAIL_MASS:
            return
        n += 1


def f_coh(n_bar: float) -> float:
    """Best average fidelity of a classical memory answering every non-empty
    pulse."""
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    num = math.fsum(f_mp(n) * p for n, p in _terms(n_bar))
    return num / -math.expm1(-n_bar)


def max_efficiency(n_bar: float) -> float:
    """Energy-ratio efficiency of answering every non-empty pulse with one
    photon."""
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    return -math.expm1(-n_bar) / n_bar


@dataclass(frozen=True)
class ClassicalBoundQuery:
    n_bar: float
    eta_required: float

    def __post_init__(self):
        if self.n_bar <= 0:
            raise ValueError("n_bar must be positive")
        if not 0 <= self.eta_required <= 1:
            raise ValueError("eta_required must lie in [0, 1]")

    @property
    def feasible(self) -> bool:
        return self.eta_required <= max_efficiency(self.n_bar) * (1 + 1e-12)


class InfeasibleQuery(ValueError):
    pass


def max_classical_fidelity(q: ClassicalBoundQuery) -> float:
    """Highest average fidelity at the required efficiency.

    The memory answers every pulse with more than ``N*`` photons and a
    fraction ``q*`` of the ``N*``-photon pulses, with ``N*`` and ``q*`` set
    so the answered probability equals ``eta_required * n_bar``.  Answering
    the largest photon numbers first is optimal because ``f_mp`` increases
    with N.
    """
    if not q.feasible:
        raise InfeasibleQuery(
            f"eta={q.eta_required} exceeds max efficiency {max_efficiency(q.n_bar):.6g} "
            f"at n_bar={q.n_bar}")
    budget = min(q.eta_required * q.n_bar, -math.expm1(-q.n_bar))
    if budget <= 0:
        return 1.0
    terms = list(_terms(q.n_bar))
    # fill answered mass from the top photon numbers down
    answered = 0.0
    weighted = 0.0
    for n, p in reversed(terms):
        take = min(p, budget - answered)
        if take <= 0:
            break
        answered += take
        weighted += take * f_mp(n)
    if answered <= 0:
        return 1.0
    return weighted / answered


def intercept_resend_mc(trials: int, rng: np.random.Generator, inputs=None) -> float:
    """Monte Carlo fidelity of measuring in the 3-basis and resending.

    ``inputs`` optionally fixes the Bloch vectors of the probed states
    (shape ``(3,)`` or ``(trials, 3)``); by default they are Haar random.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if inputs is None:
        v = rng.standard_normal((trials, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    else:
        v = np.broadcast_to(np.asarray(inputs, dtype=float), (trials, 3))
    z = v[:, 2]
    outcome = np.where(rng.random(trials) < 0.5 * (1 + z), 1.0, -1.0)
    return float(np.mean(0.5 * (1 + outcome * z)))


def threshold_surface(n_bars, etas) -> list[tuple[float, float, float, bool]]:
    """Grid of ``(n_bar, eta, f_max, feasible)``; ``f_max`` is nan when
    infeasible."""
    rows = []
    for n in n_bars:
        for eta in etas:
            q = ClassicalBoundQuery(float(n), float(eta))
            if q.feasible:
                rows.append((float(n), float(eta), max_classical_fidelity(q), True))
            else:
                rows.append((float(n), float(eta), math.nan, False))
    return rows


def write_surface_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_bar", "eta", "f_max", "feasible"])
        for n, eta, f, ok in rows:
            w.writerow([repr(n), repr(eta), "" if not ok else repr(f), int(ok)])
