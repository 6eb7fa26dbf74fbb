"""Gate matrices, Kraus channels, and random-gate ensembles.

Conventions used throughout the package:
  - rotation gates use the half-angle convention R_P(t) = exp(-i t P / 2)
  - all functions broadcast over a leading batch axis, so an angle array of
    shape (B,) yields stacked matrices of shape (B, 2, 2)
  - samplers take an explicit numpy Generator so parallel workers can use
    independent streams
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

# fixed two-qubit gates (qubit order: first qubit is the high bit)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SQRT_X = (I2 + 1j * PAULI_X) / (1 + 1j)  # V with V @ V = X
CV = np.block([[I2, np.zeros((2, 2))], [np.zeros((2, 2)), SQRT_X]])
CVDG = CV.conj().T

UNITARITY_ATOL = 1e-12


class DomainError(ValueError):
    """Raised when a channel parameter lies outside its admissible range."""


@dataclass(frozen=True)
class UnitaryMatrix:
    """A 2x2 or 4x4 unitary, validated on construction."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", m)
        if m.shape not in ((2, 2), (4, 4)):
            raise ValueError(f"expected a 2x2 or 4x4 matrix, got shape {m.shape}")
        dev = np.abs(m.conj().T @ m - np.eye(m.shape[0])).max()
        if dev > UNITARITY_ATOL:
            raise ValueError(f"matrix is not unitary (deviation {dev:.3e})")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class KrausChannel:
    """A CPTP map given by Kraus operators of a common dimension."""

    kraus_ops: tuple

    def __post_init__(self):
        ops = tuple(np.asarray(K, dtype=complex) for K in self.kraus_ops)
        object.__setattr__(self, "kraus_ops", ops)
        dim = ops[0].shape[0]
        if any(K.shape != (dim, dim) for K in ops):
            raise ValueError("Kraus operators must share a square dimension")
        acc = sum(K.conj().T @ K for K in ops)
        dev = np.abs(acc - np.eye(dim)).max()
        if dev > UNITARITY_ATOL:
            raise ValueError(f"channel is not trace preserving (deviation {dev:.3e})")

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(K @ rho @ K.conj().T for K in self.kraus_ops)


def rotation_matrix(axis: str, theta) -> np.ndarray:
    """R_axis(theta) = exp(-i theta P/2); broadcasts over theta."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    out = np.zeros(theta.shape + (2, 2), dtype=complex)
    if axis == "x":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
    elif axis == "y":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
    elif axis == "z":
        out[..., 0, 0] = np.exp(-1j * theta / 2)
        out[..., 1, 1] = np.exp(1j * theta / 2)
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")
    return out


def two_pauli_rotation(axis: str, theta) -> np.ndarray:
    """exp(-i theta (P otimes P) / 2) for P in {X, Y, Z}; broadcasts over theta."""
    P = PAULIS[axis.upper()]
    PP = np.kron(P, P)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2)[..., None, None]
    s = np.sin(theta / 2)[..., None, None]
    return c * np.eye(4) - 1j * s * PP


def u1_matrix(varphi: float, phi: float) -> np.ndarray:
    """The conditional gate applied by the feedforward on outcome 1."""
    varphi = np.asarray(varphi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(np.broadcast(varphi, phi).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.cos(varphi) * np.exp(-1j * phi)
    out[..., 0, 1] = -1j * np.sin(varphi)
    out[..., 1, 0] = -1j * np.sin(varphi)
    out[..., 1, 1] = np.cos(varphi) * np.exp(1j * phi)
    return out


def u3_matrix(t1, t2, t3) -> np.ndarray:
    """Euler-form single-qubit gate R_Y(t1) R_Z(t2) R_Y(t3)."""
    return rotation_matrix("y", t1) @ rotation_matrix("z", t2) @ rotation_matrix("y", t3)


def feedforward_kraus(theta, varphi: float, phi: float) -> list[np.ndarray]:
    """Kraus set of the probabilistic feedforward channel.

    Applies (with probability sin^2(theta/2)) a computational-basis measurement
    followed by u1_matrix(varphi, phi) on outcome 1. theta broadcasts.
    """
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2)[..., None, None]
    s = np.sin(theta / 2)[..., None, None]
    P0 = np.diag([1.0, 0.0]).astype(complex)
    P1 = np.diag([0.0, 1.0]).astype(complex)
    U1 = u1_matrix(varphi, phi)
    return [c * I2, s * P0, s * (U1 @ P1)]


def feedforward_channel(theta: float, varphi: float, phi: float) -> KrausChannel:
    return KrausChannel(tuple(feedforward_kraus(float(theta), varphi, phi)))


def reset_channel() -> KrausChannel:
    """Deterministic reset onto |0>: feedforward with theta=pi, varphi=pi/2."""
    return feedforward_channel(np.pi, np.pi / 2, 0.0)


def depolarizing_kraus(lam) -> list[np.ndarray]:
    """rho -> (1-lam) rho + (lam/2) I as a Pauli mixture; lam broadcasts."""
    lam = np.asarray(lam, dtype=float)
    w0 = np.sqrt(1 - 3 * lam / 4)[..., None, None]
    w1 = np.sqrt(lam / 4)[..., None, None]
    return [w0 * I2, w1 * PAULI_X, w1 * PAULI_Y, w1 * PAULI_Z]


def depolarizing(lam: float) -> KrausChannel:
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"depolarizing weight must lie in [0, 1], got {lam}")
    return KrausChannel(tuple(depolarizing_kraus(float(lam))))


def amplitude_damping_kraus(p: float) -> list[np.ndarray]:
    K0 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
    K1 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
    return [K0, K1]


def max_nonunitality(gamma: float) -> float:
    """Largest delta any single-qubit channel can realize at nonunitarity gamma.

    Amplitude damping is extremal: delta = p^2/3 with gamma = 2p(2-p)/3.
    """
    if gamma >= 2 / 3:
        return 1 / 3
    p = 1 - np.sqrt(1 - 3 * gamma / 2)
    return p * p / 3


def noise_channel(gamma: float, delta: float) -> KrausChannel:
    """Single-qubit noise whose stat-mech transfer matrix is [[1-d, g], [d, 1-g]].

    Realized as amplitude damping (decay p_a toward |0>) composed after
    depolarizing(p_d). Closed-form inversion:
        p_a = sqrt(3 delta),
        (1 - p_d)^2 = 3 (1 - gamma - delta) / ((1 - p_a)(3 - p_a)).
    Not every (gamma, delta) with delta <= gamma <= 1/2 is channel-realizable;
    the feasible region is delta <= max_nonunitality(gamma).
    """
    if not 0.0 <= delta <= gamma <= 0.5:
        raise DomainError(f"need 0 <= delta <= gamma <= 1/2, got ({gamma}, {delta})")
    if delta > max_nonunitality(gamma) + 1e-12:
        raise DomainError(
            f"no single-qubit channel has (gamma, delta) = ({gamma}, {delta}); "
            f"delta must be <= {max_nonunitality(gamma):.6g} at this gamma"
        )
    p_a = np.sqrt(3 * delta)
    ratio = 3 * (1 - gamma - delta) / ((1 - p_a) * (3 - p_a))
    if ratio > 1 + 1e-12:
        raise DomainError(
            f"(gamma, delta) = ({gamma}, {delta}) is outside the amplitude-"
            "damping/depolarizing composition range"
        )
    p_d = 1 - np.sqrt(min(ratio, 1.0))
    ad = amplitude_damping_kraus(p_a)
    dep = depolarizing_kraus(p_d)
    return KrausChannel(tuple(A @ D for A in ad for D in dep))


@dataclass(frozen=True)
class GateEnsembleSpec:
    """A distribution over unitary gates.

    kinds:
      haar_two_qubit          Haar on U(4)
      fixed_plus_scrambling   a fixed gate followed by Haar singles on each qubit
      u3_experiment           R_Y R_Z R_Y with all angles ~ U[0, pi)
      u3_exact_2design        R_Y R_Z R_Y with outer angles ~ U[0, 2pi) and
                              cos(middle) ~ U[0, 1]; an exact single-qubit 2-design
    """

    kind: str
    matrix: np.ndarray | None = field(default=None)

    KINDS = ("haar_two_qubit", "fixed_plus_scrambling", "u3_experiment", "u3_exact_2design")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "fixed_plus_scrambling" and self.matrix is None:
            raise ValueError("fixed_plus_scrambling requires a matrix")


def haar_unitary(rng: np.random.Generator, dim: int, size: int | None = None) -> np.ndarray:
    """Haar-random unitaries via QR of a complex Gaussian with phase fix."""
    shape = (dim, dim) if size is None else (size, dim, dim)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


def sample_gate(spec: GateEnsembleSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one gate (or a stack of `size` gates) from an ensemble."""
    if spec.kind == "haar_two_qubit":
        return haar_unitary(rng, 4, size)
    if spec.kind == "fixed_plus_scrambling":
        n = 1 if size is None else size
        dim = spec.matrix.shape[0]
        if dim == 2:
            v = haar_unitary(rng, 2, n)
            out = v @ spec.matrix
        else:
            v1 = haar_unitary(rng, 2, n)
            v2 = haar_unitary(rng, 2, n)
            vv = np.einsum("bij,bkl->bikjl", v1, v2).reshape(n, 4, 4)
            out = vv @ spec.matrix
        return out[0] if size is None else out
    n = 1 if size is None else size
    if spec.kind == "u3_experiment":
        t = rng.uniform(0.0, np.pi, size=(3, n))
        out = u3_matrix(t[0], t[1], t[2])
    else:  # u3_exact_2design
        t1 = rng.uniform(0.0, 2 * np.pi, size=n)
        t3 = rng.uniform(0.0, 2 * np.pi, size=n)
        t2 = np.arccos(rng.uniform(0.0, 1.0, size=n))
        out = u3_matrix(t1, t2, t3)
    return out[0] if size is None else out
