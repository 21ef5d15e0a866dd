"""
Training a single layer
=======================

Fit one single-mode layer so that the vacuum lands on a displaced, Kerr-twisted target.
"""
import numpy as np

from cvqnn import FockState, NetworkParams, apply_gate, fidelity, network_forward
from cvqnn.fock import Displacement, Kerr
from cvqnn.training import CLASSIFICATION, CostSpec, TrainConfig, train

cutoff = 15
target = apply_gate(apply_gate(FockState.vacuum(1, cutoff), Displacement(0.6 - 0.2j)), Kerr(0.2))
spec = CostSpec(CLASSIFICATION, [target])
inputs = [FockState.vacuum(1, cutoff)]

net0 = NetworkParams.random(1, 1, seed=3)
print("start fidelity:", round(fidelity(network_forward(inputs[0], net0), target), 4))

# every step evaluates the full batch; gradients are central differences
net, trace = train(net0, lambda step, rng: (inputs, spec), TrainConfig(learning_rate=0.02, steps=300, log_every=50))
for step, cost in trace.records:
    print(f"step {step:4d}  cost {cost:.2e}")

print("end fidelity:", round(fidelity(network_forward(inputs[0], net), target), 6))
print(net.dumps())
