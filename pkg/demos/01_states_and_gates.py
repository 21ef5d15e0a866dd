"""
States and gates in a truncated Fock space
==========================================

A tour of the simulator: build states, push them through gates, read quadratures.
"""
import numpy as np

from cvqnn import FockState, apply_gate, fidelity, quadrature_expectation
from cvqnn.fock import Beamsplitter, Displacement, Kerr, Squeeze, gate_matrix

# a coherent state is the vacuum pushed by a displacement
vac = FockState.vacuum(1, 30)
coh = apply_gate(vac, Displacement(0.5))
print("<x> after D(0.5):", quadrature_expectation(coh, 0, "x"))  # 1.0 with hbar = 2
print("photon distribution:", np.round(np.abs(coh.vector()[:6]) ** 2, 4))

# squeezing only populates even levels
sq = apply_gate(vac, Squeeze(0.5, 0.0))
print("odd amplitudes of a squeezed vacuum:", np.abs(sq.vector()[1:8:2]).max())

# Kerr is diagonal, so it never changes photon statistics, only phases
kerr = apply_gate(coh, Kerr(0.3))
print("Kerr keeps |amplitudes|:", np.allclose(np.abs(kerr.vector()), np.abs(coh.vector())))
print("but the state moves: fidelity =", round(fidelity(kerr, coh), 4))

# a balanced beamsplitter on |1,0>
out = apply_gate(FockState.fock([1, 0], 3), Beamsplitter(np.pi / 4, 0.0))
print("|1,0> and |0,1> weights:", abs(out.amplitudes[1, 0]) ** 2, abs(out.amplitudes[0, 1]) ** 2)

# gates are exact exponentials of truncated generators, so they stay unitary
u = gate_matrix(Displacement(1.5 + 0.5j), 20)
print("unitarity defect:", np.abs(u.conj().T @ u - np.eye(20)).max())

# ...but truncation still costs accuracy once the state reaches the top level
for r in (0.3, 0.6, 0.9):
    col = gate_matrix(Squeeze(r, 0.0), 30)[:, 0]
    print(f"r={r}: weight on the last four levels {np.sum(np.abs(col[-4:]) ** 2):.1e}")
