"""Experiment configs and runners: classification, reconstruction, denoising, sweeps and export.

Every runner returns ``(metrics, files)``: a dict of scalar results and a dict of
output file names to contents. :func:`write_outputs` is the single writer.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .encoding import (
    EncodingMatrix,
    column_inputs,
    encode,
    fit_column_encoder,
    make_targets_classification,
    pairs_to_displacements,
    unit_columns,
)
from .errors import ConfigError, CVQNNError
from .export import GateProgram, compile_weights, export_layer, mesh_decompose, svd_decompose, verify_layer
from .fock import FockState, displacement_matrix, quadratures
from .layers import NetworkParams, dumps_ensemble, loads_ensemble
from .mnist import MnistSet, load_mnist
from .signal import (
    ImageTensor,
    SpectrumTensor,
    awgn_add,
    constant_image,
    dft2,
    idft2,
    image_bytes,
    merge_rgb,
    mse_percent,
    oracle_subtract,
    parse_image,
    split_rgb,
    spectrum_csv,
    spectrum_to_targets,
)
from .training import (
    CLASSIFICATION,
    DENOISE_IMAGE,
    DENOISE_NOISE,
    RECONSTRUCTION,
    SUBSPACE_DIM,
    CostSpec,
    TrainConfig,
    TrainTrace,
    aligned_amplitudes,
    flatten_params,
    make_objective,
    projected_fidelities,
    train,
)

EXPERIMENTS = ("classify", "reconstruct", "denoise", "sweep", "decompose")
SHARING = ("per_column", "shared")
IMAGE_FILES = ("images-idx3-ubyte.gz", "images-idx3-ubyte")
LABEL_FILES = ("labels-idx1-ubyte.gz", "labels-idx1-ubyte")

_PER_EXPERIMENT = {
    "classify": dict(modes=2, classes=2, cutoff=8, depth=1, steps=400, learning_rate=0.01),
    "reconstruct": dict(modes=1, cutoff=35, depth=15, steps=8000, learning_rate=0.001, digit_index=0),
    "denoise": dict(modes=1, cutoff=35, depth=15, steps=2000, learning_rate=0.001, digit_index=3,
                    noise_std=0.1),
    "sweep": dict(modes=1, cutoff=35, depth=15, steps=2000, learning_rate=0.001, digit_index=6,
                  noise_std=0.2),
    "decompose": dict(modes=4, cutoff=8, depth=1, steps=1, learning_rate=0.001),
}


class ExperimentFailure(CVQNNError, RuntimeError):
    """An experiment ran but its own consistency check failed; ``files`` still get written."""

    def __init__(self, message, files=None):
        super().__init__(message)
        self.files = files or {}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dataset_path: str = "data"
    seed: int = 0
    modes: Optional[int] = None
    cutoff: Optional[int] = None
    depth: Optional[int] = None
    classes: Optional[int] = None
    digit_index: Optional[int] = None
    sample_index: int = 0
    noise_mean: float = 0.5
    noise_std: Optional[float] = None
    optimizer: str = "adam"
    learning_rate: Optional[float] = None
    steps: Optional[int] = None
    gamma: float = 10.0
    out_dir: str = "out"
    fd_step: float = 1e-4
    log_every: int = 10
    keep_best: bool = True
    sharing: str = "per_column"
    train_per_class: int = 150
    test_per_class: int = 100
    channels: int = 1
    image_path: str = ""
    stds: str = "0.05,0.10,0.15,0.20,0.25,0.30"
    shape: str = "rectangular"
    params_path: str = ""
    p_correction: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for key, value in _PER_EXPERIMENT[self.experiment].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.modes >= 1, "modes must be at least 1")
        need(self.cutoff >= 2, "cutoff must be at least 2")
        need(self.depth >= 1, "depth must be at least 1")
        need(self.steps >= 1, "steps must be at least 1")
        need(self.learning_rate > 0, "learning_rate must be positive")
        need(self.fd_step > 0, "fd_step must be positive")
        need(self.gamma >= 0, "gamma must be non-negative")
        need(self.log_every >= 1, "log_every must be at least 1")
        need(self.workers >= 1, "workers must be at least 1")
        need(self.optimizer in ("adam", "rmsprop"), "optimizer must be adam or rmsprop")
        need(self.seed >= 0, "seed must be non-negative")
        if self.experiment == "classify":
            classes = self.classes if self.classes is not None else self.modes
            need(classes == self.modes, f"classes ({classes}) must equal modes ({self.modes})")
            need(2 <= classes <= 10, "classes must be between 2 and 10")
            need(self.train_per_class >= 1 and self.test_per_class >= 1, "sample counts must be positive")
        if self.experiment in ("reconstruct", "denoise", "sweep"):
            need(self.modes == 1, "image experiments use single-mode networks")
            need(self.cutoff > SUBSPACE_DIM, f"cutoff must be at least {SUBSPACE_DIM + 1}")
            need(self.sharing in SHARING, f"sharing must be one of {SHARING}")
            need(0 <= self.digit_index <= 9, "digit_index must be a digit")
            need(self.sample_index >= 0, "sample_index must be non-negative")
        if self.experiment in ("denoise", "sweep"):
            need(self.noise_std >= 0, "noise_std must be non-negative")
            need(self.channels in (1, 3), "channels must be 1 or 3")
            need(self.sharing == "per_column", "denoise learners are per column")
        if self.experiment == "sweep":
            need(len(self.std_values) >= 1, "stds must list at least one value")
            need(all(s >= 0 for s in self.std_values), "stds must be non-negative")
        if self.experiment == "decompose":
            need(self.shape in ("rectangular", "triangular"), "shape must be rectangular or triangular")

    @property
    def std_values(self):
        try:
            return [float(s) for s in self.stds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad stds list {self.stds!r}") from exc

    def train_config(self, steps=None) -> TrainConfig:
        return TrainConfig(
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            steps=steps or self.steps,
            fd_step=self.fd_step,
            seed=self.seed,
            log_every=self.log_every,
            workers=self.workers,
            keep_best=self.keep_best,
        )

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].type, raw, key) if isinstance(raw, str) else raw
        if "experiment" not in kwargs:
            raise ConfigError("config needs an experiment")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items() if v is not None)


def _coerce(typ: str, raw: str, key: str):
    typ = str(typ)
    try:
        if "bool" in typ:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if "int" in typ:
            return int(raw)
        if "float" in typ:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _subseed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _find(directory: Path, suffixes):
    for suffix in suffixes:
        hits = sorted(directory.glob(f"*{suffix}"))
        if hits:
            return hits[0]
    raise ConfigError(f"no file ending in {suffixes[0]} under {directory}")


def load_dataset(cfg: ExperimentConfig) -> MnistSet:
    root = Path(cfg.dataset_path)
    if not root.is_dir():
        raise ConfigError(f"dataset_path {root} is not a directory")
    return load_mnist(_find(root, IMAGE_FILES), _find(root, LABEL_FILES))


def _source_image(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.image_path:
        try:
            return parse_image(Path(cfg.image_path).read_bytes()).pixels
        except OSError as exc:
            raise ConfigError(f"cannot read image_path: {exc}") from exc
    ds = load_dataset(cfg)
    pool = ds.of_digit(cfg.digit_index)
    count = 3 if cfg.channels == 3 else 1
    if len(pool) < cfg.sample_index + count:
        raise ConfigError(f"not enough samples of digit {cfg.digit_index}")
    if count == 1:
        return pool[cfg.sample_index]
    # three samples of the digit stacked as colour planes
    return np.stack([pool[cfg.sample_index + k] for k in range(3)], axis=2)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _metrics_csv(metrics: dict) -> str:
    return _csv(["metric", "value"], [(k, v) for k, v in metrics.items()])


def write_outputs(out_dir, files: dict):
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        mode = "wb" if isinstance(content, bytes) else "w"
        with open(Path(out_dir) / name, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(content)


def coherent_columns(alphas, cutoff: int) -> np.ndarray:
    """``D(alpha)|0>`` for each amplitude, stacked as columns."""
    return np.stack([displacement_matrix(a, cutoff)[:, 0] for a in alphas], axis=1)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def _class_states(images, enc, modes, cutoff):
    return np.stack(
        [FockState.coherent(pairs_to_displacements(encode(im, enc)), cutoff).amplitudes for im in images],
        axis=-1,
    )


def _x_means(tensor, modes, cutoff):
    return np.stack([quadratures(tensor, modes, cutoff, m)[0] for m in range(modes)])


def _softmax(z):
    e = np.exp(z - z.max(axis=0))
    return e / e.sum(axis=0)


def run_classify(cfg: ExperimentConfig):
    m, c = cfg.modes, cfg.cutoff
    ds = load_dataset(cfg)
    digits = list(range(m))
    tr = ds.subset(digits, cfg.train_per_class)
    te = ds.subset(digits, cfg.test_per_class, offset=cfg.train_per_class)
    enc = EncodingMatrix(cfg.seed, 2 * m, tr.images[0].size).fitted(tr.images)
    xtr, xte = _class_states(tr.images, enc, m, c), _class_states(te.images, enc, m, c)
    spec = CostSpec(CLASSIFICATION, make_targets_classification(tr.labels, m, c))
    net0 = NetworkParams.random(m, cfg.depth, seed=cfg.seed)
    net, trace = train(net0, lambda step, rng: (xtr, spec), cfg.train_config(), cutoff=c)
    theta = flatten_params(net)

    def evaluate(x):
        out = make_objective(net, x, spec, c).outputs(theta).reshape((c,) * m + (-1,))
        return out, _x_means(out, m, c)

    out_tr, xs_tr = evaluate(xtr)
    out_te, xs_te = evaluate(xte)
    pred_tr, pred_te = np.argmax(xs_tr, axis=0), np.argmax(xs_te, axis=0)
    confusion = np.zeros((m, m), dtype=int)
    np.add.at(confusion, (te.labels, pred_te), 1)
    probs = _softmax(xs_te)
    metrics = {
        "train_accuracy": float(np.mean(pred_tr == tr.labels)),
        "test_accuracy": float(np.mean(pred_te == te.labels)),
        "final_cost": float(make_objective(net, xtr, spec, c)(theta)),
        "encoder_scale": enc.scale,
    }
    if cfg.p_correction:
        metrics.update(_p_correction(out_tr, spec, m, c))
    files = {
        "trace.csv": trace.to_csv(),
        "metrics.csv": _metrics_csv(metrics),
        "confusion.csv": _csv(["true"] + [f"pred_{k}" for k in range(m)],
                              [[k] + list(confusion[k]) for k in range(m)]),
        "softmax.csv": _csv(["index", "label"] + [f"p_{k}" for k in range(m)],
                            [[i, int(te.labels[i])] + list(probs[:, i]) for i in range(len(te))]),
        "params.ckpt": net.dumps(),
        "encoder.bin": enc.to_bytes(),
    }
    return metrics, files


def _p_correction(outputs, spec, modes, cutoff):
    """Cost before and after a fixed displacement that zeroes the mean p quadratures."""
    from .fock import Displacement, apply_to_tensor
    from .training import cost_classification

    p_mean = np.stack([quadratures(outputs, modes, cutoff, k)[1] for k in range(modes)]).mean(axis=1)
    shifted = outputs
    for k in range(modes):
        shifted = apply_to_tensor(shifted, Displacement(-0.5j * p_mean[k], k), modes, cutoff)
    flat = lambda t: t.reshape(cutoff**modes, -1)
    targets = spec.target_matrix
    return {
        "cost_before_p_correction": cost_classification(flat(outputs), targets),
        "cost_after_p_correction": cost_classification(flat(shifted), targets),
    }


# ---------------------------------------------------------------------------
# column learners (reconstruction and denoising)
# ---------------------------------------------------------------------------


@dataclass
class ColumnFit:
    amplitudes: np.ndarray  # (dim, columns), phase-aligned unit vectors
    fidelities: np.ndarray
    weights: np.ndarray
    trace: TrainTrace
    nets: object


def fit_columns(targets, inputs_image, kind, cfg: ExperimentConfig, stream: int, columns=None) -> ColumnFit:
    """Train single-mode learners that map encoded columns of ``inputs_image`` to ``targets``.

    ``targets`` has one unit vector per column; ``columns`` restricts training to a
    subset (the rest are left at their targets with zero fidelity reported as nan).
    """
    targets = np.asarray(targets)
    n = targets.shape[1]
    cols = np.arange(n) if columns is None else np.asarray(columns)
    enc = fit_column_encoder(EncodingMatrix(cfg.seed, 2, np.size(inputs_image)), inputs_image)
    x = coherent_columns(column_inputs(inputs_image, enc)[cols], cfg.cutoff)
    t = targets[:, cols]
    spec = CostSpec(kind, list(t.T), gamma=cfg.gamma, subspace_dim=targets.shape[0])
    rng = np.random.default_rng(_subseed(cfg.seed, stream))
    if cfg.sharing == "shared":
        net0 = NetworkParams.random(1, cfg.depth, rng=rng)
    else:
        net0 = [NetworkParams.random(1, cfg.depth, rng=rng) for _ in cols]
    amps = np.zeros(targets.shape, dtype=complex)
    fids = np.full(n, np.nan)
    weights = np.full(n, np.nan)
    if len(cols) == 0:
        return ColumnFit(amps, fids, weights, TrainTrace(), [])
    net, trace = train(net0, lambda step, r: (x, spec), cfg.train_config(), cutoff=cfg.cutoff)
    out = make_objective(net, x, spec, cfg.cutoff).outputs(flatten_params(net))
    f, w = projected_fidelities(out, t, spec.subspace_dim)
    amps[:, cols] = aligned_amplitudes(out, t, spec.subspace_dim)
    fids[cols], weights[cols] = f, w
    return ColumnFit(amps, fids, weights, trace, net)


def _ckpt(nets) -> str:
    return nets.dumps() if isinstance(nets, NetworkParams) else dumps_ensemble(nets)


def run_reconstruct(cfg: ExperimentConfig):
    img = _source_image(cfg)
    if img.ndim != 2 or img.shape[0] != SUBSPACE_DIM:
        raise ConfigError(f"reconstruction needs a {SUBSPACE_DIM}-row grayscale image")
    units, norms = unit_columns(img)
    fit = fit_columns(units, img, RECONSTRUCTION, cfg, stream=0)
    recon = (fit.amplitudes * norms[None, :]).real
    metrics = {
        "mean_fidelity": float(np.mean(fit.fidelities)),
        "min_fidelity": float(np.min(fit.fidelities)),
        "min_in_subspace": float(np.min(fit.weights)),
        "pixel_mse_percent": mse_percent(recon, img),
        "final_cost": fit.trace.records[-1][1],
    }
    files = {
        "trace.csv": fit.trace.to_csv(),
        "metrics.csv": _metrics_csv(metrics),
        "fidelity.csv": _csv(["column", "fidelity", "in_subspace"],
                             [(i, fit.fidelities[i], fit.weights[i]) for i in range(len(norms))]),
        "original.pgm": image_bytes(ImageTensor(img)),
        "reconstructed.pgm": image_bytes(ImageTensor(recon)),
        "params.ckpt": _ckpt(fit.nets),
    }
    return metrics, files


def learn_spectrum(spec: SpectrumTensor, inputs_image, kind, cfg, stream):
    """Fit the normalized columns of ``spec``; returns the de-normalized learned spectrum."""
    targets, scales = spectrum_to_targets(spec)
    units = np.stack(targets, axis=1)
    fit = fit_columns(units, inputs_image, kind, cfg, stream, columns=np.flatnonzero(scales > 0))
    return SpectrumTensor(fit.amplitudes * scales[None, :]), fit


def _merge_traces(*traces) -> TrainTrace:
    out = TrainTrace()
    steps = sorted({s for t in traces for s, _ in t.records})
    for s in steps:
        out.log(s, sum(c for t in traces for st, c in t.records if st == s))
    return out


def denoise_channel(clean, cfg: ExperimentConfig, std: float, stream: int):
    """One grayscale plane through noise, both learners, the difference step and the inverse."""
    noisy = awgn_add(clean, cfg.noise_mean, std, _subseed(cfg.seed, stream, 1)).pixels
    flat = constant_image(cfg.noise_mean, clean.shape).pixels
    noisy_spec, flat_spec = dft2(noisy), dft2(flat)
    jobs = [(noisy_spec, noisy, DENOISE_IMAGE, 2), (flat_spec, flat, DENOISE_NOISE, 3)]
    with ThreadPoolExecutor(max_workers=min(2, cfg.workers)) as pool:
        (img_spec, img_fit), (noise_spec, noise_fit) = pool.map(
            lambda j: learn_spectrum(j[0], j[1], j[2], cfg, _subseed(cfg.seed, stream, j[3])), jobs
        )
    denoised = idft2(oracle_subtract(img_spec, noise_spec)).pixels
    exact = idft2(oracle_subtract(noisy_spec, flat_spec)).pixels
    return {
        "noisy": noisy,
        "denoised": denoised,
        "exact": exact,
        "image_fit": img_fit,
        "noise_fit": noise_fit,
        "learned_spectrum": img_spec,
        "trace": _merge_traces(img_fit.trace, noise_fit.trace),
    }


def _denoise(cfg: ExperimentConfig, std: float, stream: int = 0):
    src = _source_image(cfg)
    planes = [src] if src.ndim == 2 else [p.pixels for p in split_rgb(ImageTensor(src))]
    if any(p.shape != (SUBSPACE_DIM, SUBSPACE_DIM) for p in planes):
        raise ConfigError(f"denoising needs {SUBSPACE_DIM}x{SUBSPACE_DIM} planes")
    runs = [denoise_channel(p, cfg, std, stream * 8 + k) for k, p in enumerate(planes)]

    def stack(key):
        if len(runs) == 1:
            return runs[0][key]
        return merge_rgb(*(ImageTensor(r[key]) for r in runs)).pixels

    clean, noisy, denoised, exact = src, stack("noisy"), stack("denoised"), stack("exact")
    fids = np.concatenate([r["image_fit"].fidelities for r in runs])
    metrics = {
        "std": float(std),
        "mse_noisy": mse_percent(noisy, clean),
        "mse_denoised": mse_percent(denoised, clean),
        "mse_exact_pipeline": mse_percent(exact, clean),
        "pipeline_residual": float(np.max(np.abs(exact - (noisy - cfg.noise_mean)))),
        "image_mean_fidelity": float(np.nanmean(fids)),
        "noise_fidelity": float(np.nanmean([r["noise_fit"].fidelities[0] for r in runs])),
    }
    return metrics, runs, (clean, noisy, denoised)


def run_denoise(cfg: ExperimentConfig):
    metrics, runs, (clean, noisy, denoised) = _denoise(cfg, cfg.noise_std)
    ext = "pgm" if clean.ndim == 2 else "ppm"
    files = {
        "trace.csv": _merge_traces(*(r["trace"] for r in runs)).to_csv(),
        "metrics.csv": _metrics_csv(metrics),
        f"original.{ext}": image_bytes(ImageTensor(clean)),
        f"noisy.{ext}": image_bytes(ImageTensor(noisy)),
        f"denoised.{ext}": image_bytes(ImageTensor(denoised)),
        "spectrum.csv": spectrum_csv(runs[0]["learned_spectrum"]),
        "params.ckpt": "".join(
            f"# channel {k} image\n{_ckpt(r['image_fit'].nets)}# channel {k} noise\n{_ckpt(r['noise_fit'].nets)}"
            for k, r in enumerate(runs)
        ),
    }
    return metrics, files


def run_sweep(cfg: ExperimentConfig):
    stds = cfg.std_values
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(lambda ks: _denoise(cfg, ks[1], stream=ks[0] + 1)[0], enumerate(stds)))
    rows = [(r["std"], r["mse_noisy"], r["mse_denoised"]) for r in results]
    files = {
        "sweep.csv": _csv(["std", "mse_noisy", "mse_denoised"], rows),
        "metrics.csv": _csv(["std", "mse_noisy", "mse_denoised", "mse_exact_pipeline", "image_mean_fidelity"],
                            [(r["std"], r["mse_noisy"], r["mse_denoised"], r["mse_exact_pipeline"],
                              r["image_mean_fidelity"]) for r in results]),
    }
    metrics = {"rows": rows, "all_reduced": all(d < n for _, n, d in rows)}
    if not metrics["all_reduced"]:
        bad = [s for s, n, d in rows if not d < n]
        raise ExperimentFailure(f"denoising did not reduce the error at std {bad}", files)
    return metrics, files


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def run_decompose(cfg: ExperimentConfig):
    metrics = {}
    if cfg.params_path:
        try:
            nets = loads_ensemble(Path(cfg.params_path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read params_path: {exc}") from exc
        net = nets[0]
        prog = GateProgram(net.modes)
        worst = 0.0
        for layer in net.layers:
            part = export_layer(layer, shape=cfg.shape)
            worst = max(worst, verify_layer(part, layer))
            prog.extend(part)
        metrics.update(layers=net.depth, gaussian_error=worst)
    else:
        rng = np.random.default_rng(cfg.seed)
        n = cfg.modes
        w = rng.normal(size=(n, n))
        b = rng.normal(0, 0.1, n) + 1j * rng.normal(0, 0.1, n)
        u2, r, u1 = svd_decompose(w)
        prog = compile_weights(w, b, cfg.shape)
        a, bb, d = prog.bogoliubov()
        metrics.update(
            svd_error=float(np.max(np.abs(u2 @ np.diag(np.exp(r)) @ u1 - w))),
            mesh_error_u1=float(np.max(np.abs(mesh_decompose(u1, cfg.shape).transfer_matrix() - u1))),
            mesh_error_u2=float(np.max(np.abs(mesh_decompose(u2, cfg.shape).transfer_matrix() - u2))),
            weight_error=float(np.max(np.abs((a + bb) - w))),
            bias_error=float(np.max(np.abs(d - b))),
        )
    metrics.update(records=len(prog), beamsplitters=prog.count("BS"))
    files = {"program.txt": prog.dumps(), "metrics.csv": _metrics_csv(metrics)}
    return metrics, files


RUNNERS = {
    "classify": run_classify,
    "reconstruct": run_reconstruct,
    "denoise": run_denoise,
    "sweep": run_sweep,
    "decompose": run_decompose,
}


def run(cfg: ExperimentConfig, write: bool = True):
    """Run the configured experiment and (optionally) write its files to ``cfg.out_dir``."""
    try:
        metrics, files = RUNNERS[cfg.experiment](cfg)
    except ExperimentFailure as exc:
        if write:
            write_outputs(cfg.out_dir, exc.files)
        raise
    if write:
        write_outputs(cfg.out_dir, files)
    return metrics, files


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
