"""Polarization qubits: Jones vectors, density matrices and Stokes vectors.

All states are written in the circular basis, i.e. a Jones vector holds the
amplitudes ``(a_R, a_L)``.  With this choice the Pauli matrices map onto the
Stokes axes as

    S1 = Tr(rho X)   H (+) / V (-)
    S2 = Tr(rho Y)   D (+) / A (-)
    S3 = Tr(rho Z)   R (+) / L (-)

so the circular states sit on the poles of the Poincare sphere.

Density matrices are plain ``(2, 2)`` complex numpy arrays and Stokes
vectors plain ``(3,)`` real arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

MIN_NORM = 1e-9

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (I2, SX, SY, SZ)

LABELS = ("H", "V", "D", "A", "R", "L")
CIRCULAR_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class JonesVector:
    """Pure polarization state ``a_R |R> + a_L |L>``.

    The amplitudes are normalized on construction; vectors with norm below
    ``MIN_NORM`` are rejected.
    """

    a_r: complex
    a_l: complex

    def __post_init__(self):
        norm = np.hypot(abs(self.a_r), abs(self.a_l))
        if not np.isfinite(norm) or norm < MIN_NORM:
            raise ValueError("cannot normalize a (near) zero Jones vector")
        object.__setattr__(self, "a_r", complex(self.a_r) / norm)
        object.__setattr__(self, "a_l", complex(self.a_l) / norm)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a_r, self.a_l], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "JonesVector":
        v = np.asarray(v, dtype=complex).ravel()
        return cls(v[0], v[1])


_S = 1 / np.sqrt(2)
_CANONICAL = {
    "H": JonesVector(_S, _S),
    "V": JonesVector(_S, -_S),
    "D": JonesVector(_S, 1j * _S),
    "A": JonesVector(_S, -1j * _S),
    "R": JonesVector(1, 0),
    "L": JonesVector(0, 1),
}


def canonical_states() -> list[tuple[str, JonesVector]]:
    """The six characterization inputs H, V, D, A, R, L (in that order)."""
    return [(label, _CANONICAL[label]) for label in LABELS]


def state(label: str) -> JonesVector:
    try:
        return _CANONICAL[label]
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def to_density(psi: JonesVector) -> np.ndarray:
    v = psi.vector
    return np.outer(v, v.conj())


def check_density(rho, atol: float = 1e-10) -> np.ndarray:
    """Validate a 2x2 density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"density matrix must be 2x2, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=atol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.3g} != 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def to_stokes(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return np.array([np.trace(rho @ s).real for s in PAULI[1:]])


def from_stokes(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (3,):
        raise ValueError("Stokes vector must have three components")
    if np.linalg.norm(s) > 1 + 1e-10:
        raise ValueError(f"Stokes vector length {np.linalg.norm(s):.6g} exceeds 1")
    return 0.5 * (I2 + s[0] * SX + s[1] * SY + s[2] * SZ)


def stokes_of(psi: JonesVector) -> np.ndarray:
    return to_stokes(to_density(psi))


def fidelity(psi: JonesVector, rho) -> float:
    """Overlap <psi|rho|psi> of an ideal pure state with a measured state."""
    v = psi.vector
    f = np.real(v.conj() @ np.asarray(rho, dtype=complex) @ v)
    return float(np.clip(f, 0.0, 1.0))


def average_fidelity(per_state: Mapping[str, float], weighting: str = "uniform") -> float:
    """Average over input states.

    ``uniform`` is the arithmetic mean over all six canonical inputs.
    ``guided`` is the guided-field average ``(2 F_H + F_L) / 3``.
    """
    if weighting == "uniform":
        missing = [k for k in LABELS if k not in per_state]
        if missing:
            raise KeyError(f"missing fidelities for {missing}")
        return float(np.mean([per_state[k] for k in LABELS]))
    if weighting == "guided":
        for k in ("H", "L"):
            if k not in per_state:
                raise KeyError(f"missing fidelity for {k}")
        return (2 * per_state["H"] + per_state["L"]) / 3
    raise ValueError(f"unknown weighting {weighting!r}")


def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < MIN_NORM:
        raise ValueError("rotation axis must be nonzero")
    k = axis / n
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def rotate_stokes(s, axis, angle: float) -> np.ndarray:
    """Rigid rotation of a Stokes vector (Rodrigues formula)."""
    return rotation_matrix(axis, angle) @ np.asarray(s, dtype=float)


def trace_distance(rho, sigma) -> float:
    ev = np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma))
    return 0.5 * float(np.abs(ev).sum())


def format_stokes_row(label: str, s) -> list[str]:
    """CSV row ``label, S1, S2, S3`` with round-trippable floats."""
    return [label] + [repr(float(x)) for x in s]


def parse_stokes_row(row) -> tuple[str, np.ndarray]:
    label, *rest = row
    if len(rest) != 3:
        raise ValueError(f"expected label and three Stokes components, got {row!r}")
    return label, np.array([float(x) for x in rest])
