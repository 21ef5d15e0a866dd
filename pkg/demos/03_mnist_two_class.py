"""
Two-class MNIST on two modes
============================

Each image is squeezed through a seeded 784 -> 4 Gaussian encoder into two
coherent states, and a one-layer network is trained to excite the x quadrature
of the mode matching the label. Run with ``--steps`` to shorten it.
"""
import argparse
import tempfile

from cvqnn.experiments import ExperimentConfig, run

parser = argparse.ArgumentParser()
parser.add_argument("--steps", type=int, default=400)
parser.add_argument("--data", default="data")
args = parser.parse_args()

out = tempfile.mkdtemp(prefix="classify-")
cfg = ExperimentConfig("classify", dataset_path=args.data, steps=args.steps, out_dir=out)
metrics, files = run(cfg)
print(f"train accuracy {metrics['train_accuracy']:.3f}, test accuracy {metrics['test_accuracy']:.3f}")
print(files["confusion.csv"])
print("outputs in", out)
