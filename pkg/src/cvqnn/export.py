"""Compile weight matrices and trained layers into linear-optic gate programs.

Beamsplitter records use the simulator's own convention, so an exported program can
be replayed gate by gate with :mod:`cvqnn.fock`. On mode amplitudes a
``BS(i, j, theta, phi)`` acts as ``[[c, e^{i phi} s], [-e^{-i phi} s, c]]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import FormatError, NoninvertibleWeightError, NonUnitaryError
from .fock import Beamsplitter, Displacement, FockState, Kerr, Rotation, Squeeze, apply_gate
from .layers import LayerParams, beamsplitter_transfer

SINGULAR_FLOOR = 1e-12
UNITARY_TOL = 1e-10
SHAPES = ("rectangular", "triangular")
_ARITY = {"BS": (2, 2), "R": (1, 1), "S": (1, 1), "D": (1, 2), "K": (1, 1)}


@dataclass
class GateProgram:
    """Ordered primitive records, first record applied first.

    Records are tuples: ``("BS", i, j, theta, phi)``, ``("R", i, theta)``,
    ``("S", i, r)``, ``("D", i, re, im)`` and ``("K", i, kappa)``.
    """

    modes: int
    records: List[Tuple] = field(default_factory=list)

    def __post_init__(self):
        for rec in self.records:
            self._check(rec)

    def _check(self, rec):
        kind = rec[0]
        if kind not in _ARITY:
            raise FormatError(f"unknown record {kind!r}")
        nidx, nval = _ARITY[kind]
        if len(rec) != 1 + nidx + nval:
            raise FormatError(f"{kind} record needs {nidx} indices and {nval} values")
        idx = rec[1 : 1 + nidx]
        if any(not 0 <= i < self.modes for i in idx) or len(set(idx)) != nidx:
            raise IndexError(f"bad mode indices in {rec}")

    def append(self, *rec):
        self._check(rec)
        self.records.append(tuple(rec))

    def extend(self, other: "GateProgram"):
        for rec in other.records:
            self.append(*rec)

    def __len__(self):
        return len(self.records)

    def count(self, kind: str) -> int:
        return sum(1 for r in self.records if r[0] == kind)

    def dumps(self) -> str:
        lines = [f"MODES {self.modes}"]
        for rec in self.records:
            nidx = _ARITY[rec[0]][0]
            ints = [str(int(i)) for i in rec[1 : 1 + nidx]]
            vals = [f"{float(v):.17g}" for v in rec[1 + nidx :]]
            lines.append(" ".join([rec[0]] + ints + vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "GateProgram":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines or not lines[0].startswith("MODES "):
            raise FormatError("program must start with 'MODES n'")
        prog = cls(int(lines[0].split()[1]))
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] not in _ARITY:
                raise FormatError(f"unknown record {parts[0]!r}")
            nidx = _ARITY[parts[0]][0]
            try:
                rec = [parts[0]] + [int(p) for p in parts[1 : 1 + nidx]]
                rec += [float(p) for p in parts[1 + nidx :]]
            except ValueError as exc:
                raise FormatError(f"bad record {ln!r}") from exc
            prog.append(*rec)
        return prog

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "GateProgram":
        with open(path) as fh:
            return cls.loads(fh.read())

    def gates(self):
        out = []
        for rec in self.records:
            kind = rec[0]
            if kind == "BS":
                out.append(Beamsplitter(rec[3], rec[4], rec[1], rec[2]))
            elif kind == "R":
                out.append(Rotation(rec[2], rec[1]))
            elif kind == "S":
                out.append(Squeeze(rec[2], 0.0, rec[1]))
            elif kind == "D":
                out.append(Displacement(complex(rec[2], rec[3]), rec[1]))
            else:
                out.append(Kerr(rec[2], rec[1]))
        return out

    def transfer_matrix(self) -> np.ndarray:
        """Product of the passive (BS and R) records on mode amplitudes."""
        u = np.eye(self.modes, dtype=complex)
        for rec in self.records:
            if rec[0] == "BS":
                u = beamsplitter_transfer(self.modes, rec[1], rec[2], rec[3], rec[4]) @ u
            elif rec[0] == "R":
                u[rec[1]] *= np.exp(1j * rec[2])
            else:
                raise ValueError(f"{rec[0]} record is not passive")
        return u

    def bogoliubov(self):
        """Gaussian action ``a -> A a + B a^dagger + d`` of every non-Kerr record."""
        n = self.modes
        A, B, d = np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex), np.zeros(n, complex)
        for rec in self.records:
            kind = rec[0]
            a2, b2, d2 = np.eye(n, dtype=complex), np.zeros((n, n), complex), np.zeros(n, complex)
            if kind == "BS":
                a2 = beamsplitter_transfer(n, rec[1], rec[2], rec[3], rec[4])
            elif kind == "R":
                a2[rec[1], rec[1]] = np.exp(1j * rec[2])
            elif kind == "S":
                a2[rec[1], rec[1]] = np.cosh(rec[2])
                b2[rec[1], rec[1]] = -np.sinh(rec[2])
            elif kind == "D":
                d2[rec[1]] = complex(rec[2], rec[3])
            else:
                continue
            A, B, d = compose_bogoliubov((A, B, d), (a2, b2, d2))
        return A, B, d

    def run(self, state: FockState) -> FockState:
        for g in self.gates():
            state = apply_gate(state, g)
        return state


def compose_bogoliubov(first, second):
    """Action of ``first`` followed by ``second``."""
    a1, b1, d1 = first
    a2, b2, d2 = second
    return (
        a2 @ a1 + b2 @ b1.conj(),
        a2 @ b1 + b2 @ a1.conj(),
        a2 @ d1 + b2 @ d1.conj() + d2,
    )


def svd_decompose(W):
    """``W = U2 @ diag(exp(r)) @ U1``; returns ``(U2, r, U1)``."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.all(np.isfinite(W)):
        raise ValueError("weight matrix must be finite")
    u, s, vh = np.linalg.svd(W)
    if s[-1] <= SINGULAR_FLOOR:
        raise NoninvertibleWeightError(f"smallest singular value {s[-1]:.3e} cannot be squeezed")
    return u, np.log(s), vh


def _null_right(u, row, a, b):
    # mix columns a, b with BS(-theta, phi) so u[row, a] vanishes
    x, y = u[row, a], u[row, b]
    theta = np.arctan2(abs(x), abs(y))
    phi = -np.angle(-x * np.conj(y))
    n = u.shape[0]
    return u @ beamsplitter_transfer(n, a, b, -theta, phi), (a, b, theta, phi)


def _null_left(u, col, a, b):
    # mix rows a, b with BS(theta, phi) so u[b, col] vanishes
    x, y = u[a, col], u[b, col]
    theta = np.arctan2(abs(y), abs(x))
    phi = -np.angle(y * np.conj(x))
    n = u.shape[0]
    return beamsplitter_transfer(n, a, b, theta, phi) @ u, (a, b, theta, phi)


def _wrap(x):
    return float(np.mod(x + np.pi, 2 * np.pi) - np.pi)


def mesh_decompose(U, shape: str = "rectangular") -> GateProgram:
    """Beamsplitter mesh plus output phases reproducing the unitary ``U``."""
    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    if U.ndim != 2 or U.shape[1] != n:
        raise ValueError("unitary must be square")
    if shape not in SHAPES:
        raise ValueError(f"shape must be one of {SHAPES}")
    defect = float(np.max(np.abs(U.conj().T @ U - np.eye(n))))
    if defect > UNITARY_TOL:
        raise NonUnitaryError(f"input is not unitary (defect {defect:.3e})", defect=defect)
    u = U.copy()
    right, left = [], []
    if shape == "rectangular":
        for i in range(n - 1):
            if i % 2 == 0:
                for j in range(i + 1):
                    u, rec = _null_right(u, n - 1 - j, i - j, i - j + 1)
                    right.append(rec)
            else:
                for j in range(1, i + 2):
                    r = n + j - i - 2
                    u, rec = _null_left(u, j - 1, r - 1, r)
                    left.append(rec)
    else:
        for row in range(n - 1, 0, -1):
            for col in range(row):
                u, rec = _null_right(u, row, col, col + 1)
                right.append(rec)
    # u = L_k..L_1 U R_1..R_m is diagonal, so U = L_1^-1..L_k^-1 D R_m^-1..R_1^-1.
    # Applied first to last: R_1^-1..R_m^-1, then L_k^-1..L_1^-1 with D pushed
    # through them to the output.
    phases = np.angle(np.diag(u))
    prog = GateProgram(n)
    for a, b, theta, phi in right:
        prog.append("BS", a, b, float(theta), _wrap(phi))
    for a, b, theta, phi in reversed(left):
        prog.append("BS", a, b, float(-theta), _wrap(phi + phases[b] - phases[a]))
    for m in range(n):
        prog.append("R", m, _wrap(phases[m]))
    return prog


def _passive(prog: GateProgram, u, shape):
    for rec in mesh_decompose(u, shape).records:
        prog.append(*rec)


def export_layer(params: LayerParams, b=None, shape: str = "rectangular") -> GateProgram:
    """Gate program for one layer in execution order; ``b`` is added to each displacement."""
    n = params.modes
    bias = np.zeros(n, complex) if b is None else np.asarray(b, dtype=complex).reshape(-1)
    if bias.size != n:
        raise ValueError(f"bias has {bias.size} entries for {n} modes")
    prog = GateProgram(n)
    _passive(prog, params.u1.matrix(), shape)
    for m, r in enumerate(params.squeeze_r):
        prog.append("S", m, float(r))
    _passive(prog, params.u2.matrix(), shape)
    for m, a in enumerate(params.disp_alpha + bias):
        prog.append("D", m, float(a.real), float(a.imag))
    for m, k in enumerate(params.kerr_kappa):
        prog.append("K", m, float(k))
    return prog


def compile_weights(W, b=None, shape: str = "rectangular") -> GateProgram:
    """Gaussian program whose action on mean x quadratures is ``x -> W x + 2 Re b``.

    ``S(r)`` contracts x by ``e^-r``, so the singular values are realized by ``S(-r)``.
    """
    u2, r, u1 = svd_decompose(W)
    n = len(r)
    bias = np.zeros(n, complex) if b is None else np.asarray(b, dtype=complex).reshape(-1)
    prog = GateProgram(n)
    _passive(prog, u1, shape)
    for m, rm in enumerate(r):
        prog.append("S", m, float(-rm))
    _passive(prog, u2, shape)
    for m, a in enumerate(bias):
        prog.append("D", m, float(a.real), float(a.imag))
    return prog


def layer_bogoliubov(params: LayerParams, b=None):
    """Gaussian part of a layer, built directly from its parameters."""
    n = params.modes
    bias = np.zeros(n, complex) if b is None else np.asarray(b, dtype=complex).reshape(-1)
    zero = np.zeros((n, n), complex)
    nowhere = np.zeros(n, complex)
    r = params.squeeze_r
    sq = (np.diag(np.cosh(r)) + zero, -np.diag(np.sinh(r)) + zero, nowhere)
    act = compose_bogoliubov((params.u1.matrix(), zero, nowhere), sq)
    act = compose_bogoliubov(act, (params.u2.matrix(), zero, nowhere))
    return act[0], act[1], act[2] + params.disp_alpha + bias


def verify_layer(prog: GateProgram, params: LayerParams, b=None, tol: float = 1e-8) -> float:
    """Largest deviation between the program's Gaussian part and the layer's; raises past ``tol``."""
    got = prog.bogoliubov()
    want = layer_bogoliubov(params, b)
    err = max(float(np.max(np.abs(g - w), initial=0.0)) for g, w in zip(got, want))
    if err > tol:
        raise NonUnitaryError(f"exported program deviates from the layer by {err:.3e}", defect=err)
    return err
