#!/usr/bin/env python3
"""Walk through the numerics core: tensors, the gradient tape, and a
finite-difference sanity check of a hand-derived backward rule."""

import numpy as np

from gatefuse.autodiff import GradTape, Tensor, cross_entropy, matmul, relu

rng = np.random.default_rng(0)

# A two-layer scoring function: logits = relu(X W1) W2
x = Tensor(rng.normal(size=(5, 4)))
w1 = Tensor(rng.normal(size=(4, 6)))
w2 = Tensor(rng.normal(size=(6, 3)))
labels = rng.integers(0, 3, size=5)

tape = GradTape()
hidden = relu(matmul(x, w1, tape), tape)
loss = cross_entropy(matmul(hidden, w2, tape), labels, np.arange(5), tape)
tape.backward(loss)

print(f"loss = {loss.item():.6f}")
print(f"tape recorded {len(tape)} ops: {tape.op_names()}")
print(f"dL/dW1 has shape {w1.grad.shape}, dL/dW2 has shape {w2.grad.shape}")

# Check one entry of dL/dW1 against central finite differences.
i, j = 2, 3
h = 1e-6


def loss_value():
    hid = relu(matmul(x, w1))
    return cross_entropy(matmul(hid, w2), labels, np.arange(5)).item()


orig = w1.value[i, j]
w1.value[i, j] = orig + h
up = loss_value()
w1.value[i, j] = orig - h
down = loss_value()
w1.value[i, j] = orig

numeric = (up - down) / (2 * h)
print(f"dL/dW1[{i},{j}]: analytic {w1.grad[i, j]:+.8f}, "
      f"finite-difference {numeric:+.8f}")
