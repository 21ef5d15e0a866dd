"""Costs, finite-difference gradients, Adam/RMSProp and the training loop."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CVQNNError,
    DegenerateProjectionError,
    IncompatibleStateError,
    InvalidBatchError,
    InvalidParameterError,
    InvalidUpdateError,
    NonFiniteCostError,
)
from .fock import PROJECTION_FLOOR, FockState
from .layers import (
    SINGLE_MODE_SIZE,
    LayerParams,
    NetworkParams,
    SINGLE_MODE_GATES,
    apply_single_mode_gate,
    apply_single_mode_layers,
    layer_unitary,
)

CLASSIFICATION = "classification"
RECONSTRUCTION = "reconstruction"
DENOISE_IMAGE = "denoise_image"
DENOISE_NOISE = "denoise_noise"
COST_KINDS = (CLASSIFICATION, RECONSTRUCTION, DENOISE_IMAGE, DENOISE_NOISE)

DEFAULT_GAMMA = 10.0
SUBSPACE_DIM = 28


def _as_vector(t) -> np.ndarray:
    if isinstance(t, FockState):
        return t.vector()
    return np.asarray(t, dtype=complex).reshape(-1)


@dataclass(frozen=True)
class CostSpec:
    """Which cost to evaluate, against which targets.

    ``targets`` holds full states for classification and unit vectors of length
    ``subspace_dim`` for the subspace-projected kinds.
    """

    kind: str
    targets: Sequence
    gamma: float = DEFAULT_GAMMA
    subspace_dim: int = SUBSPACE_DIM

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.gamma < 0:
            raise InvalidParameterError("gamma must be non-negative")
        mat = np.stack([_as_vector(t) for t in self.targets], axis=1)
        norms = np.linalg.norm(mat, axis=0)
        if np.any(np.abs(norms - 1) > 1e-9):
            raise InvalidParameterError("cost targets must be unit vectors")
        if self.kind != CLASSIFICATION and mat.shape[0] != self.subspace_dim:
            raise InvalidParameterError(
                f"targets have length {mat.shape[0]}, subspace_dim is {self.subspace_dim}"
            )
        mat.setflags(write=False)
        object.__setattr__(self, "_matrix", mat)

    @property
    def target_matrix(self) -> np.ndarray:
        """Targets stacked as columns."""
        return self._matrix

    @property
    def penalized(self) -> bool:
        return self.kind == RECONSTRUCTION and self.gamma > 0


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.001
    steps: int = 100
    fd_step: float = 1e-4
    seed: int = 0
    log_every: int = 1
    workers: int = 1
    keep_best: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "rmsprop"):
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be positive")
        if not self.fd_step > 0:
            raise InvalidParameterError("fd_step must be positive")
        if self.steps < 1 or self.log_every < 1:
            raise InvalidParameterError("steps and log_every must be at least 1")


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


def _stack_outputs(outputs) -> np.ndarray:
    if isinstance(outputs, np.ndarray):
        return outputs.reshape(-1, outputs.shape[-1]) if outputs.ndim > 1 else outputs[:, None]
    return np.stack([_as_vector(o) for o in outputs], axis=1)


def overlap_fidelities(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Column-wise ``|<t_i|psi_i>|**2``."""
    return np.abs(np.sum(targets.conj() * outputs, axis=0)) ** 2


def projected_fidelities(outputs: np.ndarray, targets: np.ndarray, dim: int):
    """Fidelities of the renormalized ``dim``-level projections, plus in-subspace weights.

    Returns:
        tuple: ``(fidelities, weights)`` where ``weights[i] = ||P psi_i||**2``.
    """
    head = outputs[:dim]
    weights = np.sum(np.abs(head) ** 2, axis=0)
    small = np.flatnonzero(np.sqrt(weights) <= PROJECTION_FLOOR)
    if small.size:
        i = int(small[0])
        raise DegenerateProjectionError(
            f"output {i} has in-subspace norm {np.sqrt(weights[i]):.3e}", index=i
        )
    fids = np.abs(np.sum(targets.conj() * head, axis=0)) ** 2 / weights
    return fids, weights


def aligned_amplitudes(outputs: np.ndarray, targets: np.ndarray, dim: int) -> np.ndarray:
    """Renormalized ``dim``-level projections with each global phase matched to its target.

    Fidelity cannot see a global phase, so read-outs that feed a classical
    reassembly fix it against the target they were trained on.
    """
    projected_fidelities(outputs, targets, dim)  # raises on a degenerate projection
    head = outputs[:dim] / np.linalg.norm(outputs[:dim], axis=0)
    ov = np.sum(targets.conj() * head, axis=0)
    phase = np.where(np.abs(ov) > 0, ov / np.where(ov == 0, 1, np.abs(ov)), 1)
    return head * phase.conj()[None, :]


def cost_classification(outputs, targets) -> float:
    """Sum over pairs of ``(|<psi_i|phi_i>|**2 - 1)**2``."""
    if len(outputs) != len(targets):
        raise InvalidBatchError(f"{len(outputs)} outputs vs {len(targets)} targets")
    out = _stack_outputs(outputs)
    tgt = _stack_outputs(targets)
    if out.shape != tgt.shape:
        raise IncompatibleStateError(f"output shape {out.shape} vs target shape {tgt.shape}")
    return float(np.sum((overlap_fidelities(out, tgt) - 1.0) ** 2))


def cost_reconstruction(outputs, spec: CostSpec) -> float:
    """Projected-fidelity cost plus ``gamma`` times the leaked-weight penalty.

    ``sum_i (F_i - 1)**2 + gamma * sum_i (1 - ||P psi_i||**2)**2`` where ``F_i`` is
    the fidelity of the renormalized projection onto the first ``subspace_dim``
    levels.
    """
    out = _stack_outputs(outputs)
    tgt = spec.target_matrix
    if out.shape[1] != tgt.shape[1]:
        raise InvalidBatchError(f"{out.shape[1]} outputs vs {tgt.shape[1]} targets")
    fids, weights = projected_fidelities(out, tgt, spec.subspace_dim)
    return float(np.sum(_member_costs(fids, weights, spec)))


def _member_costs(fids, weights, spec: CostSpec) -> np.ndarray:
    cost = (fids - 1.0) ** 2
    if spec.penalized:
        cost = cost + spec.gamma * (1.0 - weights) ** 2
    return cost


def _costs_from_overlaps(ov, weights, spec: CostSpec) -> np.ndarray:
    """Per-sample cost terms from target overlaps and in-subspace weights."""
    if spec.kind == CLASSIFICATION:
        return (np.abs(ov) ** 2 - 1.0) ** 2
    small = np.flatnonzero(weights <= PROJECTION_FLOOR**2)
    if small.size:
        i = int(small[0])
        raise DegenerateProjectionError(
            f"output {i} has in-subspace norm {np.sqrt(max(weights[i], 0)):.3e}", index=i
        )
    return _member_costs(np.abs(ov) ** 2 / weights, weights, spec)


def evaluate_cost(outputs, spec: CostSpec) -> float:
    if spec.kind == CLASSIFICATION:
        out = _stack_outputs(outputs)
        tgt = spec.target_matrix
        if out.shape != tgt.shape:
            raise InvalidBatchError(f"output shape {out.shape} vs target shape {tgt.shape}")
        return float(np.sum((overlap_fidelities(out, tgt) - 1.0) ** 2))
    return cost_reconstruction(outputs, spec)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _central(cost, theta, h, k):
    e = np.zeros_like(theta)
    e[k] = h
    plus, minus = cost(theta + e), cost(theta - e)
    if not (np.isfinite(plus) and np.isfinite(minus)):
        raise NonFiniteCostError(f"non-finite cost while perturbing coordinate {k}", coordinate=k)
    return (plus - minus) / (2 * h)


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def finite_diff_gradient(cost: Callable, theta, h: float = 1e-4, workers: int = 1) -> np.ndarray:
    """Central-difference gradient; coordinates are independent and may run on threads."""
    theta = np.asarray(theta, dtype=float)
    if not h > 0:
        raise InvalidParameterError("finite-difference step must be positive")
    base = cost(theta)
    if not np.isfinite(base):
        raise NonFiniteCostError("cost is not finite at theta")
    return np.array(_map(lambda k: _central(cost, theta, h, k), range(theta.size), workers))


def _padded_targets(spec: CostSpec, dim: int) -> np.ndarray:
    tgt = spec.target_matrix
    if tgt.shape[0] == dim:
        return tgt
    out = np.zeros((dim, tgt.shape[1]), dtype=complex)
    out[: tgt.shape[0]] = tgt
    return out


def _check_finite_pair(plus, minus, idx):
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise NonFiniteCostError(f"non-finite cost while perturbing coordinate {idx}", coordinate=idx)


class NetworkObjective:
    """Cost of one shared network on a fixed batch, as a function of its flat parameters.

    ``inputs`` is a tensor of shape ``(cutoff,) * modes + (batch,)``.

    :meth:`gradient` returns the same central differences as
    :func:`finite_diff_gradient`, evaluated cheaply: since a coordinate lives in a
    single layer, the layers after it are folded once per step into adjoint target
    vectors (and, for projected costs, the pulled-back subspace projector), so each
    shifted evaluation only rebuilds the perturbed layer.
    """

    def __init__(self, inputs, spec: CostSpec, modes: int, depth: int, cutoff: int):
        inputs = np.asarray(inputs, dtype=complex)
        self.modes, self.depth, self.cutoff = modes, depth, cutoff
        self.dim = cutoff**modes
        self.inputs = inputs.reshape(self.dim, -1)
        if spec.kind != CLASSIFICATION and modes != 1:
            raise IncompatibleStateError("subspace-projected costs need a single mode")
        self.spec = spec
        self.layer_size = LayerParams.size(modes)

    @property
    def size(self) -> int:
        return self.layer_size * self.depth

    def _layer(self, vec):
        return layer_unitary(LayerParams.unflatten(vec, self.modes), self.cutoff)

    def outputs(self, theta) -> np.ndarray:
        out = self.inputs
        for vec in np.split(np.asarray(theta, dtype=float), self.depth):
            out = self._layer(vec) @ out
        return out

    def costs(self, theta) -> np.ndarray:
        """Per-sample cost terms."""
        out = self.outputs(theta)
        ov = np.sum(_padded_targets(self.spec, self.dim).conj() * out, axis=0)
        w = np.sum(np.abs(out[: self.spec.subspace_dim]) ** 2, axis=0)
        return _costs_from_overlaps(ov, w, self.spec)

    def __call__(self, theta) -> float:
        return evaluate_cost(self.outputs(theta), self.spec)

    def gradient(self, theta, h: float = 1e-4, workers: int = 1) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        vecs = np.split(theta, self.depth)
        mats = [self._layer(v) for v in vecs]
        prefix = [self.inputs]
        for m in mats[:-1]:
            prefix.append(m @ prefix[-1])
        projected = self.spec.kind != CLASSIFICATION
        adj = [None] * self.depth
        proj = [None] * self.depth
        a = _padded_targets(self.spec, self.dim)
        p = np.diag((np.arange(self.dim) < self.spec.subspace_dim).astype(complex))
        for layer in range(self.depth - 1, -1, -1):
            adj[layer], proj[layer] = a, p
            a = mats[layer].conj().T @ a
            if projected:
                p = mats[layer].conj().T @ p @ mats[layer]

        def shifted(layer, k, delta):
            vec = vecs[layer].copy()
            vec[k] += delta
            w = self._layer(vec) @ prefix[layer]
            ov = np.sum(adj[layer].conj() * w, axis=0)
            wt = np.real(np.sum(w.conj() * (proj[layer] @ w), axis=0)) if projected else None
            return np.sum(_costs_from_overlaps(ov, wt, self.spec))

        def coordinate(idx):
            layer, k = divmod(idx, self.layer_size)
            plus, minus = shifted(layer, k, h), shifted(layer, k, -h)
            _check_finite_pair(plus, minus, idx)
            return (plus - minus) / (2 * h)

        return np.array(_map(coordinate, range(theta.size), workers))


class EnsembleObjective:
    """One independent single-mode network per batch column, costs summed.

    ``theta`` is member-major: member ``j`` owns ``theta[j * depth * 6:(j + 1) * depth * 6]``.
    Because members share no parameters, shifting the same coordinate of every member
    at once yields each member's central difference of the summed cost in one pass.
    """

    def __init__(self, inputs, spec: CostSpec, depth: int, cutoff: int):
        self.inputs = np.asarray(inputs, dtype=complex).reshape(cutoff, -1)
        if spec.kind == CLASSIFICATION:
            raise ValueError("ensembles are for subspace-projected costs")
        self.spec, self.depth, self.cutoff = spec, depth, cutoff
        self.members = self.inputs.shape[1]
        if spec.target_matrix.shape[1] != self.members:
            raise InvalidBatchError(
                f"{self.members} inputs vs {spec.target_matrix.shape[1]} targets"
            )

    @property
    def size(self) -> int:
        return self.members * self.depth * SINGLE_MODE_SIZE

    def _params(self, theta):
        return np.asarray(theta, dtype=float).reshape(self.members, self.depth, SINGLE_MODE_SIZE)

    def outputs(self, theta) -> np.ndarray:
        p = self._params(theta)
        x = self.inputs[:, :, None]
        for layer in range(self.depth):
            x = apply_single_mode_layers(x, p[:, layer], self.cutoff)
        return x[:, :, 0]

    def costs(self, theta) -> np.ndarray:
        out = self.outputs(theta)
        ov = np.sum(_padded_targets(self.spec, self.cutoff).conj() * out, axis=0)
        w = np.sum(np.abs(out[: self.spec.subspace_dim]) ** 2, axis=0)
        return _costs_from_overlaps(ov, w, self.spec)

    def __call__(self, theta) -> float:
        return evaluate_cost(self.outputs(theta), self.spec)

    def gradient(self, theta, h: float = 1e-4, workers: int = 1) -> np.ndarray:
        p = self._params(theta)
        c, dim = self.cutoff, self.spec.subspace_dim
        gates = [(layer, g) for layer in range(self.depth) for g in range(len(SINGLE_MODE_GATES))]
        # state entering each gate, shape (c, members, 1)
        before = []
        x = self.inputs[:, :, None]
        for layer, g in gates:
            before.append(x)
            x = apply_single_mode_gate(x, p[:, layer], g, c)
        # Everything after a gate is folded into pulled-back vectors: column 0 is the
        # target, the rest span the levels outside the subspace, so the in-subspace
        # weight of w is |w|**2 - |Q^dagger w|**2.
        back = np.zeros((c, self.members, 1 + c - dim), dtype=complex)
        back[:, :, 0] = _padded_targets(self.spec, c)
        back[np.arange(dim, c), :, np.arange(1, 1 + c - dim)] = 1.0
        after = [None] * len(gates)
        for i in range(len(gates) - 1, -1, -1):
            after[i] = back
            layer, g = gates[i]
            if i:
                back = apply_single_mode_gate(back, p[:, layer], g, c, adjoint=True)
        gate_of = {}
        for i, (layer, g) in enumerate(gates):
            for k in SINGLE_MODE_GATES[g]:
                gate_of[layer * SINGLE_MODE_SIZE + k] = i

        def shifted(idx, delta):
            i = gate_of[idx]
            layer, g = gates[i]
            pk = p[:, layer].copy()
            pk[:, idx % SINGLE_MODE_SIZE] += delta
            w = apply_single_mode_gate(before[i], pk, g, c)[:, :, 0]
            proj = np.einsum("cmk,cm->mk", after[i].conj(), w)
            wt = np.sum(np.abs(w) ** 2, axis=0) - np.sum(np.abs(proj[:, 1:]) ** 2, axis=1)
            return _costs_from_overlaps(proj[:, 0], wt, self.spec)

        def coordinate(idx):
            plus, minus = shifted(idx, h), shifted(idx, -h)
            _check_finite_pair(plus, minus, idx)
            return (plus - minus) / (2 * h)

        cols = _map(coordinate, range(self.depth * SINGLE_MODE_SIZE), workers)
        return np.stack(cols, axis=1).reshape(-1)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerState:
    kind: str
    learning_rate: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.9
    eps: float = 1e-8

    @classmethod
    def init(cls, kind: str, size: int, learning_rate: float = 0.001) -> "OptimizerState":
        if kind not in ("adam", "rmsprop"):
            raise InvalidParameterError(f"unknown optimizer {kind!r}")
        return cls(kind, learning_rate, np.zeros(size), np.zeros(size))


def optimizer_step(state: OptimizerState, theta, grad) -> Tuple[OptimizerState, np.ndarray]:
    """One Adam (bias-corrected) or RMSProp update; returns the new state and parameters."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise InvalidUpdateError(
            f"shapes differ: theta {theta.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    lr = state.learning_rate
    if state.kind == "adam":
        m = state.beta1 * state.m + (1 - state.beta1) * grad
        v = state.beta2 * state.v + (1 - state.beta2) * grad**2
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        return replace(state, m=m, v=v, t=t), new
    v = state.decay * state.v + (1 - state.decay) * grad**2
    new = theta - lr * grad / np.sqrt(v + state.eps)
    return replace(state, v=v, t=t), new


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainTrace:
    records: List[Tuple[int, float]] = field(default_factory=list)

    def log(self, step: int, cost: float):
        self.records.append((int(step), float(cost)))

    @property
    def costs(self) -> np.ndarray:
        return np.array([c for _, c in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "cost"])
        for step, cost in self.records:
            w.writerow([step, f"{cost:.17g}"])
        return buf.getvalue()

    def save(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


class TrainingAborted(CVQNNError, RuntimeError):
    """Raised when the cost goes non-finite; carries the trace and last good parameters."""

    def __init__(self, message, trace: TrainTrace, params=None):
        super().__init__(message)
        self.trace = trace
        self.params = params


def _batch_tensor(inputs):
    if isinstance(inputs, np.ndarray):
        return inputs
    return np.stack([s.amplitudes for s in inputs], axis=-1)


def make_objective(net, inputs, spec, cutoff):
    if isinstance(net, NetworkParams):
        return NetworkObjective(_batch_tensor(inputs), spec, net.modes, net.depth, cutoff)
    return EnsembleObjective(_batch_tensor(inputs), spec, net[0].depth, cutoff)


def flatten_params(net):
    if isinstance(net, NetworkParams):
        return net.flatten()
    if len({(n.modes, n.depth) for n in net}) != 1 or net[0].modes != 1:
        raise ValueError("ensemble members must be single-mode networks of equal depth")
    return np.concatenate([n.flatten() for n in net])


def unflatten_params(theta, like):
    if isinstance(like, NetworkParams):
        return NetworkParams.unflatten(theta, like.modes, like.depth)
    return [NetworkParams.unflatten(v, 1, like[0].depth) for v in np.split(theta, len(like))]


def train(
    net,
    batchfn: Callable,
    config: TrainConfig,
    cutoff: Optional[int] = None,
    callback: Optional[Callable] = None,
):
    """Full-batch training by central differences and Adam/RMSProp.

    Args:
        net: a :class:`NetworkParams` shared by every sample, or a list of
            single-mode networks, one per sample (column ``j`` of the batch goes
            through ``net[j]``).
        batchfn: ``batchfn(step, rng) -> (inputs, CostSpec)``; ``inputs`` is a list
            of :class:`FockState` or a tensor ``(cutoff,) * modes + (batch,)``.
        config: optimizer and schedule settings.
        cutoff: Fock cutoff; inferred from :class:`FockState` inputs if omitted.
        callback: optional ``callback(step, theta, cost)`` run after each update.

    With ``config.keep_best`` the lowest-cost parameters seen are returned instead
    of the last iterate (per member for ensembles). Costs are compared across steps,
    so this only makes sense when ``batchfn`` returns a fixed batch.

    Returns:
        tuple: trained parameters (same form as ``net``) and the :class:`TrainTrace`.
    """
    rng = np.random.default_rng(config.seed)
    theta = flatten_params(net)
    opt = OptimizerState.init(config.optimizer, theta.size, config.learning_rate)
    trace = TrainTrace()
    best = None
    for step in range(1, config.steps + 1):
        inputs, spec = batchfn(step, rng)
        cut = cutoff if cutoff is not None else inputs[0].cutoff
        objective = make_objective(net, inputs, spec, cut)
        try:
            cost = objective(theta)
            if not np.isfinite(cost):
                raise NonFiniteCostError(f"cost is {cost} at step {step}")
            if config.keep_best:
                best = _track_best(best, objective, theta, net)
            grad = objective.gradient(theta, config.fd_step, config.workers)
        except (NonFiniteCostError, DegenerateProjectionError) as exc:
            raise TrainingAborted(
                f"training stopped at step {step}: {exc}", trace, unflatten_params(theta, net)
            ) from exc
        if step == 1 or step % config.log_every == 0:
            trace.log(step, cost)
        opt, theta = optimizer_step(opt, theta, grad)
        if callback is not None:
            callback(step, theta, cost)
    if config.keep_best:
        try:
            best = _track_best(best, objective, theta, net)
        except (NonFiniteCostError, DegenerateProjectionError):
            pass
        theta = best[1]
    return unflatten_params(theta, net), trace


def _track_best(best, objective, theta, net):
    """Keep the lowest-cost parameters seen; ensemble members are tracked independently."""
    if isinstance(net, NetworkParams):
        cost = np.array([np.sum(objective.costs(theta))])
        rows = theta[None, :]
    else:
        cost = objective.costs(theta)
        rows = theta.reshape(len(net), -1)
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCostError("non-finite member cost")
    if best is None:
        return cost, rows.reshape(-1).copy()
    old_cost, old = best
    old = old.reshape(rows.shape).copy()
    better = cost < old_cost
    old[better] = rows[better]
    return np.where(better, cost, old_cost), old.reshape(-1)
