"""
Learning the columns of a digit
===============================

Every column of a 28x28 digit, normalized, is a 28-level amplitude vector. A
15-layer single-mode learner per column turns the encoded column into that
state, and the learned amplitudes rebuild the picture. The default 8000 steps
take several minutes; ``--steps 500`` already shows the shape.
"""
import argparse
import tempfile

import numpy as np

from cvqnn.experiments import ExperimentConfig, run
from cvqnn.signal import parse_image

parser = argparse.ArgumentParser()
parser.add_argument("--steps", type=int, default=8000)
parser.add_argument("--digit", type=int, default=0)
parser.add_argument("--data", default="data")
args = parser.parse_args()

out = tempfile.mkdtemp(prefix="reconstruct-")
cfg = ExperimentConfig("reconstruct", dataset_path=args.data, digit_index=args.digit, steps=args.steps, out_dir=out)
metrics, files = run(cfg)
print(f"mean column fidelity {metrics['mean_fidelity']:.4f} (worst {metrics['min_fidelity']:.4f})")

# a quick look without an image viewer
img = parse_image(files["reconstructed.pgm"]).pixels
for row in img[::2]:
    print("".join(" .:-=+*#%@"[int(v * 9.99)] for v in np.clip(row, 0, 1)))
print("PGM files in", out)
