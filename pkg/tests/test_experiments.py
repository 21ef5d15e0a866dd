from pathlib import Path

import numpy as np
import pytest

from cvqnn import cli
from cvqnn.errors import ConfigError
from cvqnn.experiments import (
    ExperimentConfig,
    ExperimentFailure,
    parse_config_text,
    run,
)
from cvqnn.export import GateProgram
from cvqnn.layers import NetworkParams, loads_ensemble
from cvqnn.signal import parse_image

DATA = str(Path(__file__).resolve().parents[1] / "data")

TINY = {
    "classify": dict(train_per_class=6, test_per_class=4, steps=3),
    "reconstruct": dict(depth=2, steps=2),
    "denoise": dict(depth=1, steps=2),
    "sweep": dict(depth=1, steps=2, stds="0.1,0.2"),
    "decompose": dict(),
}


def tiny(experiment, **kw):
    return ExperimentConfig(experiment, dataset_path=DATA, **{**TINY[experiment], **kw})


def outputs(cfg):
    try:
        return run(cfg, write=False)[1]
    except ExperimentFailure as exc:
        return exc.files


# -- configs -------------------------------------------------------------------------------


def test_defaults_per_experiment():
    c = ExperimentConfig("classify")
    assert (c.modes, c.cutoff, c.depth, c.steps) == (2, 8, 1, 400)
    r = ExperimentConfig("reconstruct")
    assert (r.modes, r.cutoff, r.depth, r.digit_index) == (1, 35, 15, 0)
    d = ExperimentConfig("denoise")
    assert (d.noise_mean, d.noise_std, d.digit_index) == (0.5, 0.1, 3)


@pytest.mark.parametrize(
    "experiment,kw",
    [
        ("classify", dict(classes=3, modes=2)),
        ("reconstruct", dict(cutoff=20)),
        ("reconstruct", dict(depth=0)),
        ("reconstruct", dict(modes=2)),
        ("denoise", dict(noise_std=-0.1)),
        ("denoise", dict(channels=2)),
        ("sweep", dict(stds="0.1,x")),
        ("decompose", dict(shape="hexagonal")),
        ("classify", dict(optimizer="sgd")),
        ("classify", dict(learning_rate=0.0)),
        ("nonsense", dict()),
    ],
)
def test_config_rejects(experiment, kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment, **kw)


def test_config_text():
    text = "# comment\nexperiment = classify\nseed = 3   # trailing\nkeep_best = false\nlearning_rate = 0.02\n"
    cfg = ExperimentConfig.from_mapping(parse_config_text(text))
    assert cfg.seed == 3 and cfg.keep_best is False and cfg.learning_rate == 0.02
    back = ExperimentConfig.from_mapping(parse_config_text(cfg.dumps()))
    assert back == cfg
    with pytest.raises(ConfigError):
        parse_config_text("seed 3\n")
    with pytest.raises(ConfigError):
        parse_config_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"experiment": "classify", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"experiment": "classify", "seed": "three"})


# -- runners ------------------------------------------------------------------------------------


def test_classify_outputs():
    metrics, files = run(tiny("classify"), write=False)
    assert set(files) == {"trace.csv", "metrics.csv", "confusion.csv", "softmax.csv", "params.ckpt", "encoder.bin"}
    conf = np.loadtxt(files["confusion.csv"].splitlines()[1:], delimiter=",", dtype=int)
    assert conf[:, 1:].sum() == 8
    assert 0 <= metrics["test_accuracy"] <= 1
    probs = np.loadtxt(files["softmax.csv"].splitlines()[1:], delimiter=",")[:, 2:]
    assert np.allclose(probs.sum(axis=1), 1)
    assert NetworkParams.loads(files["params.ckpt"]).modes == 2


def test_classify_p_correction_reports_costs():
    metrics, _ = run(tiny("classify", p_correction=True), write=False)
    assert "cost_after_p_correction" in metrics


def test_reconstruct_outputs():
    metrics, files = run(tiny("reconstruct"), write=False)
    assert parse_image(files["reconstructed.pgm"]).pixels.shape == (28, 28)
    assert len(files["fidelity.csv"].splitlines()) == 29
    assert len(loads_ensemble(files["params.ckpt"])) == 28
    assert 0 <= metrics["mean_fidelity"] <= 1


def test_reconstruct_shared_network():
    _, files = run(tiny("reconstruct", sharing="shared"), write=False)
    assert len(loads_ensemble(files["params.ckpt"])) == 1


def test_denoise_outputs_and_pipeline_residual():
    metrics, files = run(tiny("denoise"), write=False)
    assert metrics["pipeline_residual"] <= 1e-12
    for name in ("original.pgm", "noisy.pgm", "denoised.pgm"):
        assert parse_image(files[name]).pixels.shape == (28, 28)
    assert files["spectrum.csv"].startswith("ky,kx,re,im\n")


def test_denoise_colour():
    metrics, files = run(tiny("denoise", channels=3), write=False)
    assert parse_image(files["denoised.ppm"]).channels == 3
    assert metrics["pipeline_residual"] <= 1e-12


def test_sweep_csv_shape():
    files = outputs(tiny("sweep"))
    lines = files["sweep.csv"].splitlines()
    assert lines[0] == "std,mse_noisy,mse_denoised"
    noisy = [float(l.split(",")[1]) for l in lines[1:]]
    assert len(noisy) == 2 and noisy[0] < noisy[1]


def test_decompose_random_weights():
    metrics, files = run(tiny("decompose"), write=False)
    assert metrics["weight_error"] <= 1e-10 and metrics["svd_error"] <= 1e-10
    prog = GateProgram.loads(files["program.txt"])
    assert prog.modes == 4 and prog.count("BS") == 12


def test_decompose_checkpoint(tmp_path):
    ckpt = tmp_path / "p.ckpt"
    NetworkParams.random(2, 3, seed=1).save(ckpt)
    metrics, files = run(tiny("decompose", params_path=str(ckpt)), write=False)
    assert metrics["layers"] == 3 and metrics["gaussian_error"] <= 1e-8
    assert GateProgram.loads(files["program.txt"]).count("K") == 6


@pytest.mark.parametrize("experiment", ["classify", "reconstruct", "denoise", "sweep", "decompose"])
def test_rerun_is_byte_identical(experiment):
    a, b = outputs(tiny(experiment, seed=5)), outputs(tiny(experiment, seed=5))
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_seed_changes_outputs():
    a, b = outputs(tiny("decompose", seed=1)), outputs(tiny("decompose", seed=2))
    assert a["program.txt"] != b["program.txt"]


# -- command line -------------------------------------------------------------------------------------


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_cli_success_writes_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["decompose", "--out-dir", str(out), "--seed", "3"]) == 0
    assert (out / "program.txt").exists() and (out / "metrics.csv").exists()
    assert "weight_error" in capsys.readouterr().out


def test_cli_flags_override_file(tmp_path):
    path = write_cfg(tmp_path, f"experiment = decompose\nseed = 1\nout_dir = {tmp_path / 'a'}\n")
    cfg = cli.load_config("decompose", path, seed=9, out_dir=str(tmp_path / "b"))
    assert cfg.seed == 9 and cfg.out_dir == str(tmp_path / "b")


@pytest.mark.parametrize(
    "text",
    ["experiment = classify\nclasses = 3\n", "experiment = reconstruct\n", "colour = red\n"],
)
def test_cli_config_errors_exit_1(tmp_path, text):
    # the second case runs reconstruct under the decompose command
    assert cli.main(["decompose", "--config", write_cfg(tmp_path, text)]) == 1


def test_cli_low_cutoff_exit_1(tmp_path):
    assert cli.main(["reconstruct", "--config", write_cfg(tmp_path, "cutoff = 20\n")]) == 1


def test_cli_missing_dataset_exit_1(tmp_path):
    path = write_cfg(tmp_path, f"dataset_path = {tmp_path / 'nowhere'}\n")
    assert cli.main(["classify", "--config", path, "--out-dir", str(tmp_path)]) == 1


def test_cli_runtime_error_exit_2(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_text("layer 0 u1_phases not-a-number\n")
    path = write_cfg(tmp_path, f"params_path = {bad}\n")
    assert cli.main(["decompose", "--config", path, "--out-dir", str(tmp_path / "o")]) == 2
