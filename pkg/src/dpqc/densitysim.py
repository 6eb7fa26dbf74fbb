"""Exact channel (density matrix) and stochastic trajectory simulation.

State indexing convention: qubit 0 is the most significant bit, so basis
index b corresponds to the bitstring (b >> (n-1-q)) & 1 for qubit q. All
engines carry an optional leading batch axis; per-batch parameter vectors
and per-batch sampled gates are supported so that parameter sweeps and
Monte-Carlo ensembles run as stacked matmuls.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import channels as ch
from .circuits import (
    Circuit,
    OpSpec,
    DEPOLARIZING,
    FEEDFORWARD,
    NOISE,
    RESET,
    SINGLE_QUBIT_GATE,
    TWO_QUBIT_GATE,
)

DEFAULT_MAX_QUBITS = 12

HERMITICITY_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIG_FLOOR = -1e-8


class ResourceError(RuntimeError):
    """Raised when a simulation exceeds the configured qubit cap."""


class UnsupportedOpError(ValueError):
    """Raised when an engine cannot realize an op (e.g. ensemble gate without rng)."""


@dataclass
class DensityMatrix:
    n_qubits: int
    entries: np.ndarray

    def __post_init__(self):
        dim = 2 ** self.n_qubits
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (dim, dim):
            raise ValueError(f"expected {dim}x{dim} entries for {self.n_qubits} qubits")
        self.entries = m

    def validate(self, psd: bool = True):
        dev_h = np.abs(self.entries - self.entries.conj().T).max()
        if dev_h > HERMITICITY_ATOL:
            raise ValueError(f"not Hermitian (deviation {dev_h:.3e})")
        dev_t = abs(np.trace(self.entries) - 1.0)
        if dev_t > TRACE_ATOL:
            raise ValueError(f"trace deviates from 1 by {dev_t:.3e}")
        if psd:
            lo = np.linalg.eigvalsh(self.entries).min()
            if lo < EIG_FLOOR:
                raise ValueError(f"negative eigenvalue {lo:.3e}")
        return self


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex)
        if v.shape != (2 ** self.n_qubits,):
            raise ValueError("amplitude length does not match qubit count")
        self.amplitudes = v

    def validate(self):
        if abs(np.linalg.norm(self.amplitudes) - 1.0) > TRACE_ATOL:
            raise ValueError("state is not normalized")
        return self

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass
class TrajectoryResult:
    n_traj: int
    means: np.ndarray
    stderrs: np.ndarray


def _apply_mats(t, mats, axes):
    """Contract matrices onto tensor axes of t.

    t has shape (B, 2, ..., 2); mats is (2^k, 2^k) or (B, 2^k, 2^k) for the
    k target axes. Uses a moveaxis/reshape/matmul path so batched gates hit
    stacked BLAS.
    """
    k = len(axes)
    B = t.shape[0]
    tm = np.moveaxis(t, axes, range(1, k + 1))
    rest = tm.shape[k + 1:]
    tm = tm.reshape(B, 2 ** k, -1)
    out = np.matmul(mats, tm)
    out = out.reshape((B,) + (2,) * k + rest)
    return np.moveaxis(out, range(1, k + 1), axes)


def _rho_tensor(rho, n):
    return rho.reshape(rho.shape[:-2] + (2,) * (2 * n))


def _apply_unitary_rho(t, mats, qubits, n):
    t = _apply_mats(t, mats, [1 + q for q in qubits])
    return _apply_mats(t, mats.conj(), [1 + n + q for q in qubits])


def _apply_kraus_rho(t, kraus, qubits, n):
    out = None
    for K in kraus:
        term = _apply_mats(t, K, [1 + q for q in qubits])
        term = _apply_mats(term, np.conj(K), [1 + n + q for q in qubits])
        out = term if out is None else out + term
    return out


_FIXED_GATES = {"cnot": ch.CNOT, "cz": ch.CZ, "cv": ch.CV, "cvdg": ch.CVDG}


@lru_cache(maxsize=64)
def _noise_kraus_cached(gamma: float, delta: float):
    return ch.noise_channel(gamma, delta).kraus_ops


def _op_angles(op: OpSpec, params):
    """Angles of a parameterized op, broadcasting over a batch axis of params."""
    if op.param_slots:
        return [params[..., s] for s in op.param_slots]
    return list(op.constants)


def op_action(op: OpSpec, params, rng, size):
    """Realize an op as ('unitary', mats), ('kraus', [mats]) or
    ('mixture', weights, [unitaries]).

    mats may carry a leading batch axis when parameters are batched or the op
    is an ensemble gate drawn per instance.
    """
    kind, gate = op.kind, op.gate
    if kind in (SINGLE_QUBIT_GATE, TWO_QUBIT_GATE):
        if gate == "haar":
            if rng is None:
                raise UnsupportedOpError("ensemble gate requires an rng")
            dim = 2 if kind == SINGLE_QUBIT_GATE else 4
            return "unitary", ch.haar_unitary(rng, dim, size)
        if gate in _FIXED_GATES:
            return "unitary", _FIXED_GATES[gate]
        if gate == "cu1":
            varphi, phi = op.constants
            U1 = ch.u1_matrix(varphi, phi)
            cu = np.eye(4, dtype=complex)
            cu[2:, 2:] = U1
            return "unitary", cu
        if gate == "u3":
            a1, a2, a3 = _op_angles(op, params)
            return "unitary", ch.u3_matrix(a1, a2, a3)
        if gate in ("rx", "ry", "rz"):
            (a,) = _op_angles(op, params)
            return "unitary", ch.rotation_matrix(gate[1], a)
        if gate in ("rxx", "ryy", "rzz"):
            (a,) = _op_angles(op, params)
            return "unitary", ch.two_pauli_rotation(gate[1], a)
        raise UnsupportedOpError(f"gate {gate!r}")
    if kind == FEEDFORWARD:
        varphi, phi, theta = op.feedforward_angles()
        if theta is None:
            (theta,) = _op_angles(op, params)
        return "kraus", ch.feedforward_kraus(theta, varphi, phi)
    if kind == RESET:
        return "kraus", ch.feedforward_kraus(np.pi, np.pi / 2, 0.0)
    if kind == NOISE:
        gamma, delta = op.constants
        return "kraus", list(_noise_kraus_cached(gamma, delta))
    if kind == DEPOLARIZING:
        (lam,) = _op_angles(op, params)
        lam = np.asarray(lam, dtype=float)
        w = np.stack([1 - 3 * lam / 4, lam / 4, lam / 4, lam / 4], axis=-1)
        return "mixture", w, [ch.I2, ch.PAULI_X, ch.PAULI_Y, ch.PAULI_Z]
    raise UnsupportedOpError(f"op kind {kind!r}")


def run_density_batch(c: Circuit, params=None, rng=None, size=None,
                      max_qubits: int = DEFAULT_MAX_QUBITS) -> np.ndarray:
    """Exact channel simulation from |0...0>, returning (B, 2^n, 2^n)."""
    n = c.n_qubits
    if n > max_qubits:
        raise ResourceError(f"{n} qubits exceeds the density cap of {max_qubits}")
    params = np.asarray(params, dtype=float) if params is not None else np.zeros(c.n_params)
    if params.ndim == 2:
        B = params.shape[0]
        if size is not None and size != B:
            raise ValueError("size conflicts with the params batch")
    else:
        B = size if size is not None else 1
    if params.shape[-1] != c.n_params:
        raise ValueError(f"expected {c.n_params} parameters, got {params.shape[-1]}")
    dim = 2 ** n
    rho = np.zeros((B, dim, dim), dtype=complex)
    rho[:, 0, 0] = 1.0
    t = _rho_tensor(rho, n)
    for _, _, op in c.ops():
        action = op_action(op, params, rng, B if op.gate == "haar" else None)
        if action[0] == "unitary":
            t = _apply_unitary_rho(t, action[1], op.qubits, n)
        elif action[0] == "kraus":
            t = _apply_kraus_rho(t, action[1], op.qubits, n)
        else:
            _, w, unitaries = action
            w = np.broadcast_to(np.asarray(w), (B, len(unitaries)))
            acc = None
            for i, U in enumerate(unitaries):
                term = _apply_unitary_rho(t, U, op.qubits, n)
                term = term * w[:, i].reshape((B,) + (1,) * (2 * n))
                acc = term if acc is None else acc + term
            t = acc
    return t.reshape(B, dim, dim)


def run_density(c: Circuit, params=None, rng=None,
                max_qubits: int = DEFAULT_MAX_QUBITS) -> DensityMatrix:
    rho = run_density_batch(c, params, rng=rng, max_qubits=max_qubits)[0]
    return DensityMatrix(c.n_qubits, rho)


def run_statevector(c: Circuit, params=None, rng=None, size=None) -> np.ndarray:
    """Pure-state simulation, shape (B, 2^n). All ops must be unitary."""
    n = c.n_qubits
    params = np.asarray(params, dtype=float) if params is not None else np.zeros(c.n_params)
    B = params.shape[0] if params.ndim == 2 else (size or 1)
    psi = np.zeros((B, 2 ** n), dtype=complex)
    psi[:, 0] = 1.0
    t = psi.reshape((B,) + (2,) * n)
    for _, _, op in c.ops():
        action = op_action(op, params, rng, B if op.gate == "haar" else None)
        if action[0] != "unitary":
            raise UnsupportedOpError(f"{op.kind} is not unitary; purify the circuit first")
        t = _apply_mats(t, action[1], [1 + q for q in op.qubits])
    return t.reshape(B, 2 ** n)


def _sample_kraus_branch(t, kraus, qubits, rng):
    """One quantum-jump step: pick a Kraus branch per trajectory by its norm."""
    B = t.shape[0]
    cands = [_apply_mats(t, K, [1 + q for q in qubits]) for K in kraus]
    flat = np.stack([cand.reshape(B, -1) for cand in cands])  # (k, B, dim)
    probs = np.einsum("kbi,kbi->kb", flat.conj(), flat).real
    total = probs.sum(axis=0)
    cum = np.cumsum(probs, axis=0)
    u = rng.random(B) * total
    idx = (u[None, :] >= cum).sum(axis=0)
    chosen = flat[idx, np.arange(B)]
    norms = np.sqrt(probs[idx, np.arange(B)])
    chosen = chosen / norms[:, None]
    return chosen.reshape(t.shape)


def _pauli_word_matvec(t, word, n, offset=1):
    for q, p in word:
        t = _apply_mats(t, ch.PAULIS[p], [offset + q])
    return t


def pauli_expectations_state(psi, terms, n):
    """Sum of c * <psi| word |psi> per trajectory; psi is (B, 2^n)."""
    t = psi.reshape((psi.shape[0],) + (2,) * n)
    vals = np.zeros(psi.shape[0])
    for coeff, word in terms:
        if not word:
            vals += coeff
            continue
        tw = _pauli_word_matvec(t, word, n)
        vals += coeff * np.einsum("bi,bi->b", psi.conj(), tw.reshape(psi.shape)).real
    return vals


def run_trajectories(c: Circuit, params, n_traj: int, observables, rng) -> TrajectoryResult:
    """Stochastic unraveling: feedforward branches and Kraus jumps are sampled,
    so each trajectory is a pure state. Estimator means converge to the exact
    channel values as n_traj grows.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    n = c.n_qubits
    params = np.asarray(params, dtype=float) if params is not None else np.zeros(c.n_params)
    psi = np.zeros((n_traj, 2 ** n), dtype=complex)
    psi[:, 0] = 1.0
    t = psi.reshape((n_traj,) + (2,) * n)
    for _, _, op in c.ops():
        action = op_action(op, params, rng, n_traj if op.gate == "haar" else None)
        if action[0] == "unitary":
            t = _apply_mats(t, action[1], [1 + q for q in op.qubits])
        elif action[0] == "kraus":
            t = _sample_kraus_branch(t, action[1], op.qubits, rng)
        else:
            _, w, unitaries = action
            w = np.broadcast_to(np.asarray(w, dtype=float), (n_traj, len(unitaries)))
            if w.min() < -1e-12:
                raise UnsupportedOpError("mixture weights must be nonnegative in trajectories")
            cum = np.cumsum(w, axis=1)
            u = rng.random(n_traj) * cum[:, -1]
            idx = (u[:, None] >= cum).sum(axis=1)
            mats = np.stack(unitaries)[idx]
            t = _apply_mats(t, mats, [1 + q for q in op.qubits])
    psi = t.reshape(n_traj, 2 ** n)
    means, errs = [], []
    for obs in observables:
        vals = pauli_expectations_state(psi, obs.terms, n)
        means.append(vals.mean())
        errs.append(vals.std(ddof=1) / np.sqrt(n_traj) if n_traj > 1 else 0.0)
    return TrajectoryResult(n_traj, np.array(means), np.array(errs))


def pauli_expectations_rho(rho, terms):
    """Sum of c * Tr[rho word]; rho is (B, 2^n, 2^n) or (2^n, 2^n)."""
    single = rho.ndim == 2
    if single:
        rho = rho[None]
    B, dim = rho.shape[0], rho.shape[1]
    n = dim.bit_length() - 1
    t = _rho_tensor(rho, n)
    vals = np.zeros(B)
    for coeff, word in terms:
        if not word:
            vals += coeff * np.einsum("bii->b", rho).real
            continue
        tw = _pauli_word_matvec(t, word, n)
        vals += coeff * np.einsum("bii->b", tw.reshape(B, dim, dim)).real
    return vals[0] if single else vals


def expectation(state: DensityMatrix, hamiltonian) -> float:
    """Tr(rho H) for a PauliHamiltonian-like object with .terms."""
    if getattr(hamiltonian, "n_qubits", state.n_qubits) != state.n_qubits:
        raise ValueError("qubit counts of state and Hamiltonian differ")
    return float(pauli_expectations_rho(state.entries, hamiltonian.terms))


def _psd_sqrt(m):
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2 via eigendecompositions."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("qubit counts differ")
    lo = min(np.linalg.eigvalsh(a.entries).min(), np.linalg.eigvalsh(b.entries).min())
    if lo < EIG_FLOOR:
        raise ValueError(f"input has eigenvalue {lo:.3e} below tolerance")
    sq = _psd_sqrt(a.entries)
    w = np.linalg.eigvalsh(sq @ b.entries @ sq)
    w = np.clip(w, 0.0, None)
    return float(np.sqrt(w).sum() ** 2)


def fidelity_batch(sqrt_target: np.ndarray, rhos: np.ndarray) -> np.ndarray:
    """Fidelities of stacked states against a fixed target given its PSD sqrt."""
    m = sqrt_target @ rhos @ sqrt_target
    w = np.linalg.eigvalsh(m)
    return np.sqrt(np.clip(w, 0.0, None)).sum(axis=-1) ** 2


def purity(state: DensityMatrix) -> float:
    return float(np.einsum("ij,ji->", state.entries, state.entries).real)


def partial_trace(state: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the kept qubits (in ascending original order)."""
    keep = sorted(set(keep))
    if not keep:
        raise ValueError("keep must be nonempty")
    n = state.n_qubits
    t = state.entries.reshape((2,) * (2 * n))
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    for q in range(n):
        if q not in keep:
            letters[n + q] = letters[q]
    out = [letters[q] for q in keep] + [letters[n + q] for q in keep]
    sub = "".join(letters) + "->" + "".join(out)
    k = len(keep)
    red = np.einsum(sub, t).reshape(2 ** k, 2 ** k)
    return DensityMatrix(k, red)


def reduced_density_from_state(psi: np.ndarray, keep, n: int) -> np.ndarray:
    """rho on `keep` from statevector(s) psi of shape (..., 2^n)."""
    keep = sorted(set(keep))
    rest = [q for q in range(n) if q not in keep]
    batch = psi.shape[:-1]
    t = psi.reshape(batch + (2,) * n)
    nb = len(batch)
    t = np.moveaxis(t, [nb + q for q in keep], range(nb, nb + len(keep)))
    m = t.reshape(batch + (2 ** len(keep), 2 ** len(rest)))
    return m @ np.swapaxes(m.conj(), -1, -2)


def dump_state(state: DensityMatrix | Statevector, path):
    """Binary dump: 8-byte little-endian qubit count, then little-endian
    complex doubles, row-major."""
    arr = state.entries if isinstance(state, DensityMatrix) else state.amplitudes
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", state.n_qubits))
        fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())


def load_state(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<c16").astype(complex)
    dim = 2 ** n
    if data.size == dim:
        return Statevector(n, data)
    return DensityMatrix(n, data.reshape(dim, dim))
