"""Layers ``Kerr . D . U2 . S . U1`` and stacked networks of them.

A layer on ``N`` modes applies, in order: interferometer ``U1`` (a rectangular
mesh of beamsplitters followed by one rotation per mode), a squeeze per mode,
interferometer ``U2``, a displacement per mode and a Kerr gate per mode. With a
single mode each interferometer is just a rotation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import numpy as np

from .errors import FormatError, IncompatibleParametersError, InvalidNetworkError
from .fock import (
    Beamsplitter,
    Displacement,
    FockState,
    Kerr,
    Rotation,
    Squeeze,
    _spectral,
    apply_to_tensor,
)

INIT_STD = 0.05


def rectangular_pairs(n: int):
    """Adjacent-mode pairs of a rectangular (Clements-ordered) mesh, in application order."""
    return [(k, k + 1) for layer in range(n) for k in range(n - 1) if (layer + k) % 2 == 0]


def triangular_pairs(n: int):
    """Adjacent-mode pairs of a triangular (Reck-ordered) mesh, in application order."""
    pairs = []
    for diag in range(n - 1):
        for k in range(diag, -1, -1):
            pairs.append((k, k + 1))
    return pairs


def beamsplitter_transfer(n, i, j, theta, phi) -> np.ndarray:
    """``n x n`` mode transfer matrix of ``Beamsplitter(theta, phi)`` on modes ``(i, j)``.

    Column ``k`` holds the output amplitudes of a photon entering mode ``k``.
    """
    t = np.eye(n, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    t[i, i] = c
    t[j, j] = c
    t[i, j] = np.exp(1j * phi) * s
    t[j, i] = -np.exp(-1j * phi) * s
    return t


def mesh_size(n: int) -> int:
    return n * (n - 1) // 2


def _vec(x, dtype=float):
    arr = np.array(x, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class InterferometerParams:
    theta: np.ndarray
    phi: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        for name in ("theta", "phi", "phases"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        n = self.phases.size
        if self.theta.size != mesh_size(n) or self.phi.size != mesh_size(n):
            raise IncompatibleParametersError(
                f"{n}-mode interferometer needs {mesh_size(n)} beamsplitter angles"
            )

    @property
    def modes(self) -> int:
        return self.phases.size

    @classmethod
    def zeros(cls, n: int) -> "InterferometerParams":
        return cls(np.zeros(mesh_size(n)), np.zeros(mesh_size(n)), np.zeros(n))

    def gates(self):
        out = [
            Beamsplitter(float(t), float(p), i, j)
            for (i, j), t, p in zip(rectangular_pairs(self.modes), self.theta, self.phi)
        ]
        out += [Rotation(float(th), m) for m, th in enumerate(self.phases)]
        return out

    def matrix(self) -> np.ndarray:
        """Passive ``N x N`` transfer matrix acting on mode amplitudes ``<a>``."""
        n = self.modes
        u = np.eye(n, dtype=complex)
        for (i, j), t, p in zip(rectangular_pairs(n), self.theta, self.phi):
            u = beamsplitter_transfer(n, i, j, t, p) @ u
        return np.exp(1j * self.phases)[:, None] * u


@dataclass(frozen=True)
class LayerParams:
    u1: InterferometerParams
    squeeze_r: np.ndarray
    u2: InterferometerParams
    disp_alpha: np.ndarray
    kerr_kappa: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "squeeze_r", _vec(self.squeeze_r))
        object.__setattr__(self, "disp_alpha", _vec(self.disp_alpha, complex))
        object.__setattr__(self, "kerr_kappa", _vec(self.kerr_kappa))
        n = self.u1.modes
        sizes = {self.u2.modes, self.squeeze_r.size, self.disp_alpha.size, self.kerr_kappa.size}
        if sizes != {n}:
            raise IncompatibleParametersError("all parameter groups must cover the same modes")

    @property
    def modes(self) -> int:
        return self.u1.modes

    @staticmethod
    def size(n: int) -> int:
        """Number of real trainable parameters of an ``n``-mode layer."""
        return 2 * (n * (n - 1) + n) + n + 2 * n + n

    @classmethod
    def zeros(cls, n: int) -> "LayerParams":
        return cls(
            InterferometerParams.zeros(n),
            np.zeros(n),
            InterferometerParams.zeros(n),
            np.zeros(n, dtype=complex),
            np.zeros(n),
        )

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, std: float = INIT_STD) -> "LayerParams":
        """Angles uniform on ``[0, 2 pi)``; squeeze, displacement and Kerr ~ N(0, std**2)."""

        def interferometer():
            m = mesh_size(n)
            return InterferometerParams(
                rng.uniform(0, 2 * np.pi, m),
                rng.uniform(0, 2 * np.pi, m),
                rng.uniform(0, 2 * np.pi, n),
            )

        u1 = interferometer()
        r = rng.normal(0, std, n)
        u2 = interferometer()
        alpha = rng.normal(0, std, n) + 1j * rng.normal(0, std, n)
        kappa = rng.normal(0, std, n)
        return cls(u1, r, u2, alpha, kappa)

    def groups(self):
        """Named parameter groups in flattening order."""
        return [
            ("u1_theta", self.u1.theta),
            ("u1_phi", self.u1.phi),
            ("u1_phases", self.u1.phases),
            ("squeeze_r", self.squeeze_r),
            ("u2_theta", self.u2.theta),
            ("u2_phi", self.u2.phi),
            ("u2_phases", self.u2.phases),
            ("disp_re", self.disp_alpha.real),
            ("disp_im", self.disp_alpha.imag),
            ("kerr_kappa", self.kerr_kappa),
        ]

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.asarray(v, dtype=float) for _, v in self.groups()])

    @classmethod
    def from_groups(cls, g: dict) -> "LayerParams":
        return cls(
            InterferometerParams(g["u1_theta"], g["u1_phi"], g["u1_phases"]),
            g["squeeze_r"],
            InterferometerParams(g["u2_theta"], g["u2_phi"], g["u2_phases"]),
            np.asarray(g["disp_re"]) + 1j * np.asarray(g["disp_im"]),
            g["kerr_kappa"],
        )

    @classmethod
    def unflatten(cls, vec, n: int) -> "LayerParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != cls.size(n):
            raise IncompatibleParametersError(
                f"{n}-mode layer has {cls.size(n)} parameters, got {vec.size}"
            )
        m = mesh_size(n)
        lengths = [m, m, n, n, m, m, n, n, n, n]
        names = [name for name, _ in cls.zeros(n).groups()]
        parts = np.split(vec, np.cumsum(lengths)[:-1])
        return cls.from_groups(dict(zip(names, parts)))

    def gates(self):
        n = self.modes
        out = self.u1.gates()
        out += [Squeeze(float(r), 0.0, m) for m, r in enumerate(self.squeeze_r)]
        out += self.u2.gates()
        out += [Displacement(complex(a), m) for m, a in enumerate(self.disp_alpha)]
        out += [Kerr(float(k), m) for m, k in enumerate(self.kerr_kappa)]
        assert len(out) == 2 * (mesh_size(n) + n) + 3 * n
        return out


@dataclass(frozen=True)
class NetworkParams:
    layers: List[LayerParams] = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "layers", list(self.layers))
        if not self.layers:
            raise InvalidNetworkError("a network needs at least one layer")
        if len({lp.modes for lp in self.layers}) != 1:
            raise InvalidNetworkError("all layers must act on the same number of modes")

    @property
    def modes(self) -> int:
        return self.layers[0].modes

    @property
    def depth(self) -> int:
        return len(self.layers)

    @classmethod
    def random(cls, modes, depth, seed=None, rng=None, std=INIT_STD) -> "NetworkParams":
        rng = np.random.default_rng(seed) if rng is None else rng
        return cls([LayerParams.random(modes, rng, std) for _ in range(depth)])

    @classmethod
    def zeros(cls, modes, depth) -> "NetworkParams":
        return cls([LayerParams.zeros(modes) for _ in range(depth)])

    def flatten(self) -> np.ndarray:
        return np.concatenate([lp.flatten() for lp in self.layers])

    @classmethod
    def unflatten(cls, vec, modes: int, depth: int) -> "NetworkParams":
        vec = np.asarray(vec, dtype=float)
        size = LayerParams.size(modes)
        if vec.size != size * depth:
            raise IncompatibleParametersError(
                f"expected {size * depth} parameters for depth {depth}, got {vec.size}"
            )
        return cls([LayerParams.unflatten(v, modes) for v in np.split(vec, depth)])

    # -- checkpoint text format -------------------------------------------

    def dumps(self) -> str:
        lines = [f"# modes={self.modes} depth={self.depth}"]
        for i, lp in enumerate(self.layers):
            for name, vals in lp.groups():
                body = " ".join(f"{float(v):.17g}" for v in vals)
                lines.append(f"layer {i} {name} {body}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "NetworkParams":
        groups = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] != "layer" or len(tok) < 3:
                raise FormatError(f"bad checkpoint record: {raw!r}")
            try:
                groups.setdefault(int(tok[1]), {})[tok[2]] = np.array([float(v) for v in tok[3:]])
            except ValueError as exc:
                raise FormatError(f"bad checkpoint record: {raw!r}") from exc
        if not groups:
            raise FormatError("checkpoint has no layers")
        try:
            return cls([LayerParams.from_groups(groups[i]) for i in sorted(groups)])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"incomplete checkpoint: {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "NetworkParams":
        with open(path) as fh:
            return cls.loads(fh.read())


def dumps_ensemble(nets) -> str:
    """Several networks in one checkpoint, each block opened by ``# member j``."""
    return "".join(f"# member {j}\n" + net.dumps() for j, net in enumerate(nets))


def loads_ensemble(text: str):
    blocks, cur = [], None
    for line in text.splitlines():
        if line.startswith("# member "):
            cur = []
            blocks.append(cur)
        elif cur is not None:
            cur.append(line)
    if not blocks:
        return [NetworkParams.loads(text)]
    return [NetworkParams.loads("\n".join(b)) for b in blocks]


def apply_layer_tensor(tensor: np.ndarray, params: LayerParams, cutoff: int) -> np.ndarray:
    """Apply one layer to a tensor whose leading ``params.modes`` axes are Fock axes."""
    for gate in params.gates():
        tensor = apply_to_tensor(tensor, gate, params.modes, cutoff)
    return tensor


def layer_forward(state: FockState, params: LayerParams) -> FockState:
    if state.modes != params.modes:
        raise IncompatibleParametersError(
            f"layer acts on {params.modes} modes, state has {state.modes}"
        )
    amps = apply_layer_tensor(state.amplitudes, params, state.cutoff)
    return FockState(state.modes, state.cutoff, amps, state.hbar)


def network_forward(state: FockState, net: NetworkParams) -> FockState:
    if not isinstance(net, NetworkParams) or not net.layers:
        raise InvalidNetworkError("network is empty")
    for lp in net.layers:
        state = layer_forward(state, lp)
    return state


def layer_unitary(params: LayerParams, cutoff: int) -> np.ndarray:
    """Full ``cutoff**N`` square matrix of a layer (row-major Fock ordering)."""
    n = params.modes
    dim = cutoff**n
    ident = np.eye(dim, dtype=complex).reshape((cutoff,) * n + (dim,))
    return apply_layer_tensor(ident, params, cutoff).reshape(dim, dim)


def network_unitary(net: NetworkParams, cutoff: int) -> np.ndarray:
    u = layer_unitary(net.layers[0], cutoff)
    for lp in net.layers[1:]:
        u = layer_unitary(lp, cutoff) @ u
    return u


# ---------------------------------------------------------------------------
# batched single-mode kernels
# ---------------------------------------------------------------------------
#
# A single-mode layer flattens to (u1 phase, squeeze r, u2 phase, Re alpha, Im alpha, kappa).
# The kernels below push many vectors through many independent single-mode layers
# at once without forming the layer matrices. Arrays are laid out cutoff-first,
# x.shape == (cutoff, members, k), so each non-diagonal gate is one matrix product.

SINGLE_MODE_SIZE = LayerParams.size(1)


@lru_cache(maxsize=None)
def _spectral_pair(kind, cutoff):
    w, v = _spectral(kind, cutoff)
    return w, v, np.ascontiguousarray(v.conj().T)


def _batched_expm_apply(kind, cutoff, t, x):
    w, v, vh = _spectral_pair(kind, cutoff)
    shape = x.shape
    y = (vh @ x.reshape(cutoff, -1)).reshape(shape)
    y *= np.exp(-1j * np.multiply.outer(w, t))[:, :, None]
    return (v @ y.reshape(cutoff, -1)).reshape(shape)


# gate g of a single-mode layer and the flat parameter indices it reads
SINGLE_MODE_GATES = ((0,), (1,), (2,), (3, 4), (5,))


def apply_single_mode_gate(x, p, g: int, cutoff: int, adjoint=False):
    """Apply gate ``g`` (0..4) of a single-mode layer to ``x`` of shape ``(cutoff, members, k)``."""
    n = np.arange(cutoff, dtype=float)
    sign = -1.0 if adjoint else 1.0
    p = np.asarray(p, dtype=float)
    if g in (0, 2):
        return np.exp(1j * sign * np.multiply.outer(n, p[:, g]))[:, :, None] * x
    if g == 4:
        return np.exp(1j * sign * np.multiply.outer(n * n, p[:, 5]))[:, :, None] * x
    if g == 1:
        return _batched_expm_apply("sq", cutoff, sign * p[:, 1], x)
    alpha = p[:, 3] + 1j * p[:, 4]
    ph = np.exp(1j * np.multiply.outer(n, np.angle(alpha)))[:, :, None]
    return ph * _batched_expm_apply("disp", cutoff, sign * np.abs(alpha), ph.conj() * x)


def apply_single_mode_layers(x: np.ndarray, p: np.ndarray, cutoff: int, adjoint=False):
    """Apply one single-mode layer per member.

    Args:
        x: ``(cutoff, members, k)`` amplitudes (``k`` vectors per member).
        p: ``(members, 6)`` flattened single-mode layer parameters.
        adjoint: apply the inverse layer instead.
    """
    order = range(len(SINGLE_MODE_GATES))
    for g in reversed(order) if adjoint else order:
        x = apply_single_mode_gate(x, p, g, cutoff, adjoint)
    return x
