"""
From weights to a gate program
==============================

A classical affine map W x + b becomes interferometer, squeezers, interferometer
and displacements. The program is plain text and replays in the simulator.
"""
import numpy as np

from cvqnn import FockState, LayerParams, fidelity, layer_forward
from cvqnn.export import GateProgram, compile_weights, export_layer, mesh_decompose, svd_decompose

rng = np.random.default_rng(2)
w = rng.normal(size=(3, 3))
u2, r, u1 = svd_decompose(w)
print("squeeze parameters (log singular values):", np.round(r, 4))

prog = compile_weights(w, b=np.array([0.1, 0.0, -0.2]))
print(prog.dumps())

# the Gaussian action on mean x quadratures is W itself
A, B, d = prog.bogoliubov()
print("max |(A + B) - W| =", np.abs(A + B - w).max())

# rectangular and triangular meshes use the same number of beamsplitters
q, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
for shape in ("rectangular", "triangular"):
    mesh = mesh_decompose(q, shape)
    print(shape, mesh.count("BS"), "beamsplitters, error", np.abs(mesh.transfer_matrix() - q).max())

# a trained-looking layer, exported and replayed gate by gate
layer = LayerParams.random(2, rng, std=0.1)
text = export_layer(layer).dumps()
replayed = GateProgram.loads(text)
psi = FockState.coherent([0.2, -0.1j], 18)
print("replay fidelity:", fidelity(replayed.run(psi), layer_forward(psi, layer)))
