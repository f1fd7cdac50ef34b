"""Single-qubit state and process tomography.

State reconstruction is linear inversion of three-basis counts followed by
a radial shrink onto the Bloch ball.  The process matrix is fitted by
linear least squares in the Pauli basis {I, X, Y, Z} and then projected
onto the Hermitian positive semidefinite cone by eigenvalue clipping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import polarization as pol

PAULI = pol.PAULI


@dataclass(frozen=True)
class BasisCounts:
    """Click counts ``(n_plus, n_minus)`` in the three Stokes bases."""

    counts: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]

    def __post_init__(self):
        c = tuple((int(p), int(m)) for p, m in self.counts)
        if len(c) != 3:
            raise ValueError("need counts for exactly three bases")
        if any(p < 0 or m < 0 for p, m in c):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @property
    def totals(self) -> np.ndarray:
        return np.array([p + m for p, m in self.counts])

    @classmethod
    def from_outcomes(cls, basis, outcome) -> "BasisCounts":
        """Tally ``outcome`` (+1/-1, 0 = no click) per ``basis`` (1, 2, 3)."""
        basis = np.asarray(basis)
        outcome = np.asarray(outcome)
        return cls(tuple(
            (int(np.sum((basis == b) & (outcome > 0))), int(np.sum((basis == b) & (outcome < 0))))
            for b in (1, 2, 3)))


@dataclass(frozen=True)
class StateEstimate:
    rho: np.ndarray
    stokes: np.ndarray
    stokes_err: np.ndarray
    raw_stokes: np.ndarray

    @property
    def projected(self) -> bool:
        return bool(np.linalg.norm(self.raw_stokes) > 1)


def reconstruct_state(counts: BasisCounts) -> StateEstimate:
    totals = counts.totals
    if np.any(totals == 0):
        raise ValueError("every basis needs at least one count")
    plus = np.array([p for p, _ in counts.counts], dtype=float)
    raw = (2 * plus - totals) / totals
    s = raw.copy()
    norm = np.linalg.norm(s)
    if norm > 1:
        s = s / norm
    return StateEstimate(rho=pol.from_stokes(s), stokes=s,
                         stokes_err=1 / np.sqrt(totals), raw_stokes=raw)


# ---------------------------------------------------------------------------
# process matrices


def apply_chi_raw(chi, rho) -> np.ndarray:
    chi = np.asarray(chi, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros((2, 2), dtype=complex)
    for m in range(4):
        for n in range(4):
            if chi[m, n] != 0:
                out += chi[m, n] * PAULI[m] @ rho @ PAULI[n].conj().T
    return out


@dataclass(frozen=True)
class ProcessMatrix:
    """Process matrix in the Pauli basis, plus fit diagnostics."""

    chi: np.ndarray
    residual: float = 0.0
    raw_residual: float = 0.0
    clipped_mass: float = 0.0
    completeness_error: float = field(default=0.0)

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=complex)
        if chi.shape != (4, 4):
            raise ValueError("chi must be 4x4")
        object.__setattr__(self, "chi", chi)

    def to_json(self) -> dict:
        return {
            "basis": ["I", "X", "Y", "Z"],
            "real": self.chi.real.tolist(),
            "imag": self.chi.imag.tolist(),
            "residual": self.residual,
            "raw_residual": self.raw_residual,
            "clipped_mass": self.clipped_mass,
            "completeness_error": self.completeness_error,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProcessMatrix":
        chi = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data["imag"], dtype=float)
        return cls(chi, data.get("residual", 0.0), data.get("raw_residual", 0.0),
                   data.get("clipped_mass", 0.0), data.get("completeness_error", 0.0))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _design_matrix(inputs) -> np.ndarray:
    # row block k: vec(sigma_m rho_k sigma_n^dagger) for each (m, n)
    cols = []
    for m in range(4):
        for n in range(4):
            cols.append(np.concatenate(
                [(PAULI[m] @ r @ PAULI[n].conj().T).ravel() for r in inputs]))
    return np.array(cols).T


def completeness_error(chi) -> float:
    s = sum(chi[m, n] * PAULI[n].conj().T @ PAULI[m] for m in range(4) for n in range(4))
    return float(np.abs(s - np.eye(2)).max())


def _fit_residual(a, chi, b) -> float:
    return float(np.linalg.norm(a @ chi.ravel() - b))


def reconstruct_process(pairs) -> ProcessMatrix:
    """Least-squares process matrix from ``(rho_in, rho_out)`` pairs.

    Outputs are normalized to unit trace first.  The unconstrained fit is
    Hermitianized, negative eigenvalues are clipped and the trace is
    renormalized to one.  ``raw_residual`` and ``residual`` are the
    Frobenius fit residuals before and after projection; ``clipped_mass``
    is the total weight of the removed negative eigenvalues.
    """
    pairs = list(pairs)
    inputs = [np.asarray(r, dtype=complex) for r, _ in pairs]
    outputs = []
    for _, r in pairs:
        r = np.asarray(r, dtype=complex)
        tr = np.trace(r)
        if abs(tr) < 1e-12:
            raise ValueError("output state has zero trace")
        outputs.append(r / tr)
    span = np.array([r.ravel() for r in inputs])
    if len(inputs) < 4 or np.linalg.matrix_rank(span, tol=1e-9) < 4:
        raise ValueError("need at least 4 linearly independent input states")

    a = _design_matrix(inputs)
    b = np.concatenate([r.ravel() for r in outputs])
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    chi_raw = x.reshape(4, 4)
    raw_residual = _fit_residual(a, chi_raw, b)

    chi = 0.5 * (chi_raw + chi_raw.conj().T)
    w, v = np.linalg.eigh(chi)
    clipped = float(max(0.0, -w[w < 0].sum()))
    w = np.clip(w, 0, None)
    chi = (v * w) @ v.conj().T
    tr = np.trace(chi).real
    if tr <= 0:
        raise ValueError("fitted process matrix has no positive part")
    chi = chi / tr
    return ProcessMatrix(chi, residual=_fit_residual(a, chi, b), raw_residual=raw_residual,
                         clipped_mass=clipped, completeness_error=completeness_error(chi))


def apply_process(chi, rho) -> np.ndarray:
    """Apply ``chi`` to ``rho`` and renormalize to unit trace."""
    if isinstance(chi, ProcessMatrix):
        chi = chi.chi
    out = apply_chi_raw(chi, rho)
    tr = np.trace(out).real
    if tr < 1e-12:
        raise ValueError("process output has vanishing trace")
    return out / tr


def chi_from_kraus(kraus) -> np.ndarray:
    """Process matrix of a Kraus set: chi_mn = sum_k a_km conj(a_kn)."""
    a = np.array([[np.trace(p.conj().T @ k) / 2 for p in PAULI] for k in kraus])
    return a.T @ a.conj()


def canonical_pairs(channel) -> list[tuple[np.ndarray, np.ndarray]]:
    """Six-state tomography data for a callable ``rho -> rho_out``."""
    out = []
    for _, psi in pol.canonical_states():
        rho = pol.to_density(psi)
        out.append((rho, channel(rho)))
    return out


# ---------------------------------------------------------------------------
# Bloch-sphere picture


@dataclass(frozen=True)
class AffineBlochMap:
    """``S_out = M @ S_in + c``."""

    m: np.ndarray
    c: np.ndarray

    def __call__(self, s):
        return self.m @ np.asarray(s, dtype=float) + self.c


@dataclass(frozen=True)
class Ellipsoid:
    center: np.ndarray
    semi_axes: np.ndarray
    directions: np.ndarray  # rows are unit axis directions

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "semi_axes": self.semi_axes.tolist(),
                "directions": self.directions.tolist()}


def chi_to_bloch_map(chi) -> AffineBlochMap:
    if isinstance(chi, ProcessMatrix):
        chi = chi.chi
    m = np.empty((3, 3))
    for j in range(3):
        e_j = apply_chi_raw(chi, PAULI[j + 1])
        for i in range(3):
            m[i, j] = 0.5 * np.trace(PAULI[i + 1] @ e_j).real
    e_i = apply_chi_raw(chi, PAULI[0])
    c = np.array([0.5 * np.trace(PAULI[i + 1] @ e_i).real for i in range(3)])
    return AffineBlochMap(m, c)


def _sign_fix(v: np.ndarray, tol: float) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > tol)
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def ellipsoid(bmap: AffineBlochMap, tol: float = 1e-9) -> Ellipsoid:
    """Image of the unit ball: semi-axes are the singular values of ``M``.

    Axes are sorted by decreasing length.  Within a group of degenerate
    singular values the directions are the coordinate axes projected onto
    the degenerate subspace, taken in axis-index order, so the output is
    deterministic.  Each direction has its first nonzero component positive.
    """
    u, s, _ = np.linalg.svd(bmap.m)
    dirs = []
    sv = []
    i = 0
    while i < 3:
        j = i + 1
        while j < 3 and abs(s[j] - s[i]) <= tol:
            j += 1
        sub = u[:, i:j]
        proj = sub @ sub.T
        chosen = []
        for axis in np.eye(3):
            if len(chosen) == j - i:
                break
            v = proj @ axis
            for w in chosen:
                v = v - (w @ v) * w
            if np.linalg.norm(v) > 1e-6:
                chosen.append(v / np.linalg.norm(v))
        dirs.extend(_sign_fix(v, tol) for v in chosen)
        sv.extend(s[i:j])
        i = j
    return Ellipsoid(center=bmap.c.copy(), semi_axes=np.array(sv), directions=np.array(dirs))


def ellipsoid_csv_rows(ell: Ellipsoid) -> list[list]:
    rows = [["kind", "index", "x", "y", "z", "length"]]
    rows.append(["center", 0, *ell.center.tolist(), ""])
    for k, (d, a) in enumerate(zip(ell.directions, ell.semi_axes)):
        rows.append(["axis", k, *d.tolist(), float(a)])
    return rows
