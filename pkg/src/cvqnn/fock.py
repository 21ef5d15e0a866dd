"""Pure-state simulation of bosonic modes in a truncated Fock basis.

States are stored as complex tensors of shape ``(cutoff,) * modes`` with mode 0
on the slowest-varying axis. Quadratures follow the ``hbar = 2`` convention,
``x = a + a^dagger`` and ``p = -i (a - a^dagger)``, so a coherent state with
amplitude ``alpha`` has ``<x> = 2 Re(alpha)``.

Every gate is the exact matrix exponential of its truncated (anti-Hermitian)
generator. Each generator is a fixed real matrix conjugated by a diagonal
phase, so the exponential is evaluated from a cached eigendecomposition of the
phase-free part; the result is unitary to machine precision at any cutoff.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import (
    DegenerateProjectionError,
    IncompatibleStateError,
    InvalidCutoffError,
    InvalidParameterError,
)

HBAR = 2.0
PROJECTION_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Displacement:
    alpha: complex
    mode: int = 0

    @property
    def targets(self):
        return (self.mode,)


@dataclass(frozen=True)
class Squeeze:
    r: float
    phi: float = 0.0
    mode: int = 0

    @property
    def targets(self):
        return (self.mode,)


@dataclass(frozen=True)
class Rotation:
    theta: float
    mode: int = 0

    @property
    def targets(self):
        return (self.mode,)


@dataclass(frozen=True)
class Kerr:
    kappa: float
    mode: int = 0

    @property
    def targets(self):
        return (self.mode,)


@dataclass(frozen=True)
class Beamsplitter:
    theta: float
    phi: float = 0.0
    mode1: int = 0
    mode2: int = 1

    @property
    def targets(self):
        return (self.mode1, self.mode2)


Gate = Union[Displacement, Squeeze, Rotation, Kerr, Beamsplitter]


def _check_cutoff(cutoff):
    if int(cutoff) != cutoff or cutoff < 2:
        raise InvalidCutoffError(f"cutoff must be an integer >= 2, got {cutoff!r}")


def _check_finite(*values):
    for v in values:
        if not np.isfinite(v):
            raise InvalidParameterError(f"gate parameter is not finite: {v!r}")


@lru_cache(maxsize=None)
def annihilation(cutoff: int) -> np.ndarray:
    """Truncated annihilation operator, ``sqrt(n)`` on the superdiagonal."""
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1)


@lru_cache(maxsize=None)
def _spectral(kind: str, cutoff: int):
    """Eigendecomposition ``i K = V diag(w) V^dagger`` of a real antisymmetric generator K."""
    a = annihilation(cutoff)
    if kind == "disp":
        gen = a.T - a
    elif kind == "sq":
        gen = 0.5 * (a @ a - a.T @ a.T)
    elif kind == "bs":
        gen = np.kron(a.T, a) - np.kron(a, a.T)
    else:  # pragma: no cover
        raise KeyError(kind)
    w, v = np.linalg.eigh(1j * gen)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def _expm_generator(kind, cutoff, t):
    """``exp(t K)`` for the cached generator ``K``."""
    w, v = _spectral(kind, cutoff)
    return (v * np.exp(-1j * t * w)) @ v.conj().T


def _phases(theta, cutoff):
    return np.exp(1j * theta * np.arange(cutoff))


def displacement_matrix(alpha, cutoff):
    alpha = complex(alpha)
    mag, arg = abs(alpha), np.angle(alpha)
    core = _expm_generator("disp", cutoff, mag)
    ph = _phases(arg, cutoff)
    return ph[:, None] * core * ph.conj()[None, :]


def squeeze_matrix(r, phi, cutoff):
    core = _expm_generator("sq", cutoff, float(r))
    ph = _phases(0.5 * phi, cutoff)
    return ph[:, None] * core * ph.conj()[None, :]


def beamsplitter_matrix(theta, phi, cutoff):
    core = _expm_generator("bs", cutoff, float(theta))
    ph = np.repeat(_phases(phi, cutoff), cutoff)
    return ph[:, None] * core * ph.conj()[None, :]


def gate_matrix(gate: Gate, cutoff: int) -> np.ndarray:
    """Matrix of ``gate`` on a truncated Fock space.

    Args:
        gate: one of the gate dataclasses.
        cutoff: Fock levels per mode.

    Returns:
        ndarray: ``(cutoff, cutoff)`` complex matrix, or ``(cutoff**2, cutoff**2)``
        for a beamsplitter, in the row-major two-mode basis ``|n1, n2>``.
    """
    _check_cutoff(cutoff)
    n = np.arange(cutoff)
    if isinstance(gate, Displacement):
        _check_finite(complex(gate.alpha).real, complex(gate.alpha).imag)
        return displacement_matrix(gate.alpha, cutoff)
    if isinstance(gate, Squeeze):
        _check_finite(gate.r, gate.phi)
        return squeeze_matrix(gate.r, gate.phi, cutoff)
    if isinstance(gate, Rotation):
        _check_finite(gate.theta)
        return np.diag(np.exp(1j * gate.theta * n))
    if isinstance(gate, Kerr):
        _check_finite(gate.kappa)
        return np.diag(np.exp(1j * gate.kappa * n**2))
    if isinstance(gate, Beamsplitter):
        _check_finite(gate.theta, gate.phi)
        return beamsplitter_matrix(gate.theta, gate.phi, cutoff)
    raise TypeError(f"not a gate: {gate!r}")


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FockState:
    """Pure state of ``modes`` bosonic modes truncated at ``cutoff`` levels."""

    modes: int
    cutoff: int
    amplitudes: np.ndarray = field(repr=False)
    hbar: float = HBAR

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        shape = (self.cutoff,) * self.modes
        if amps.size != self.cutoff**self.modes:
            raise IncompatibleStateError(
                f"expected {self.cutoff}**{self.modes} amplitudes, got {amps.size}"
            )
        amps = amps.reshape(shape).copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def vacuum(cls, modes: int, cutoff: int) -> "FockState":
        return cls.fock([0] * modes, cutoff)

    @classmethod
    def fock(cls, ns, cutoff: int) -> "FockState":
        ns = tuple(int(k) for k in np.atleast_1d(ns))
        amps = np.zeros((cutoff,) * len(ns), dtype=complex)
        amps[ns] = 1.0
        return cls(len(ns), cutoff, amps)

    @classmethod
    def coherent(cls, alphas, cutoff: int) -> "FockState":
        """Product of truncated coherent states ``D(alpha_m)|0>`` (one per mode)."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
        amps = np.ones((), dtype=complex)
        for a in alphas:
            amps = np.multiply.outer(amps, displacement_matrix(a, cutoff)[:, 0])
        return cls(len(alphas), cutoff, amps)

    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_bytes(self) -> bytes:
        header = struct.pack("<II", self.modes, self.cutoff)
        return header + self.vector().astype("<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FockState":
        modes, cutoff = struct.unpack_from("<II", data, 0)
        count = cutoff**modes
        body = data[8:]
        if len(body) != 16 * count:
            raise IncompatibleStateError(
                f"state file holds {len(body)} bytes of amplitudes, expected {16 * count}"
            )
        amps = np.frombuffer(body, dtype="<c16").astype(complex)
        return cls(modes, cutoff, amps)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FockState":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def contract_mode(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    """Apply ``matrix`` to one axis of ``tensor`` (any trailing batch axes are kept)."""
    out = np.tensordot(matrix, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def contract_pair(tensor, matrix, axis1, axis2, cutoff):
    """Apply a ``cutoff**2`` square matrix to the axis pair ``(axis1, axis2)``."""
    g = matrix.reshape(cutoff, cutoff, cutoff, cutoff)
    out = np.tensordot(g, tensor, axes=([2, 3], [axis1, axis2]))
    return np.moveaxis(out, [0, 1], [axis1, axis2])


def apply_to_tensor(tensor, gate: Gate, modes: int, cutoff: int) -> np.ndarray:
    """Apply ``gate`` to a raw amplitude tensor whose first ``modes`` axes are Fock axes."""
    for t in gate.targets:
        if not 0 <= t < modes:
            raise IndexError(f"gate targets mode {t}, state has {modes} modes")
    if len(set(gate.targets)) != len(gate.targets):
        raise IndexError(f"beamsplitter targets must be distinct, got {gate.targets}")
    if isinstance(gate, (Rotation, Kerr)):
        phase = np.diag(gate_matrix(gate, cutoff))
        shape = [1] * tensor.ndim
        shape[gate.targets[0]] = cutoff
        return tensor * phase.reshape(shape)
    mat = gate_matrix(gate, cutoff)
    if isinstance(gate, Beamsplitter):
        return contract_pair(tensor, mat, gate.mode1, gate.mode2, cutoff)
    return contract_mode(tensor, mat, gate.targets[0])


def apply_gate(state: FockState, gate: Gate) -> FockState:
    """Return the state after ``gate``; non-target modes are untouched."""
    amps = apply_to_tensor(state.amplitudes, gate, state.modes, state.cutoff)
    return FockState(state.modes, state.cutoff, amps, state.hbar)


def _check_compatible(a: FockState, b: FockState):
    if a.modes != b.modes or a.cutoff != b.cutoff:
        raise IncompatibleStateError(
            f"states differ in shape: ({a.modes} modes, cutoff {a.cutoff}) vs "
            f"({b.modes} modes, cutoff {b.cutoff})"
        )


def fidelity(a: FockState, b: FockState) -> float:
    """Overlap ``|<a|b>|**2`` of two pure states."""
    _check_compatible(a, b)
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def quadratures(tensor: np.ndarray, modes: int, cutoff: int, mode: int):
    """``(<x>, <p>)`` on ``mode`` for a tensor whose leading ``modes`` axes are Fock axes."""
    sq = np.sqrt(np.arange(1, cutoff))
    hi = np.take(tensor, np.arange(1, cutoff), axis=mode)
    lo = np.take(tensor, np.arange(0, cutoff - 1), axis=mode)
    shape = [1] * tensor.ndim
    shape[mode] = cutoff - 1
    mean_a = np.sum(lo.conj() * hi * sq.reshape(shape), axis=tuple(range(modes)))
    return 2.0 * mean_a.real, 2.0 * mean_a.imag


def quadrature_expectation(state: FockState, mode: int, which: str) -> float:
    """``<x>`` or ``<p>`` of one mode under the ``hbar = 2`` convention."""
    if not 0 <= mode < state.modes:
        raise IndexError(f"mode {mode} out of range for {state.modes} modes")
    x, p = quadratures(state.amplitudes, state.modes, state.cutoff, mode)
    if which == "x":
        return float(x)
    if which == "p":
        return float(p)
    raise ValueError(f"which must be 'x' or 'p', got {which!r}")


def project_normalize(state, dim: int) -> np.ndarray:
    """First ``dim`` amplitudes of a single-mode state, renormalized to unit length.

    ``state`` may be a single-mode :class:`FockState` or a plain amplitude vector.
    """
    vec = state.vector() if isinstance(state, FockState) else np.asarray(state, dtype=complex)
    if isinstance(state, FockState) and state.modes != 1:
        raise IncompatibleStateError("subspace projection needs a single-mode state")
    if not 1 <= dim <= vec.shape[0]:
        raise ValueError(f"dim must lie in [1, {vec.shape[0]}], got {dim}")
    head = vec[:dim]
    nrm = np.linalg.norm(head)
    if nrm <= PROJECTION_FLOOR:
        raise DegenerateProjectionError(
            f"in-subspace norm {nrm:.3e} is below {PROJECTION_FLOOR:g}"
        )
    return head / nrm
