"""Tour of the reverse-mode autodiff engine the classifiers train on.

Run from the repository root:  python demos/02_autodiff_engine.py
"""

import numpy as np

from tedb import tensor
from tedb.tensor import Node, backward, grad_check

# Nodes wrap numpy arrays; ops record how values were produced.
x = Node(np.array([3.0]), requires_grad=True)
loss = tensor.mul(x, x)
backward(loss)
print("d(x*x)/dx at 3:", x.grad)  # 6

# Gradients from multiple uses of the same node accumulate.
x.zero_grad()
y = tensor.add(tensor.mul(x, 2.0), tensor.mul(x, 5.0))
backward(tensor.sum_(y))
print("d(2x + 5x)/dx:", x.grad)  # 7

# The convolution the classifier head relies on: valid positions only.
signal = Node(np.arange(24, dtype=np.float64).reshape(1, 8, 3), requires_grad=True)
filters = Node(np.ones((2, 3, 3)), requires_grad=True)
out = tensor.conv1d_valid(signal, filters)
print("conv output shape:", out.value.shape)  # (1, 6, 2): 8 - 3 + 1 positions

# Max-over-time pooling tracks its winners and routes gradient only there.
pooled = tensor.max_over_time(out)
print("argmax per channel:", pooled.op_state["argmax"])

# Every primitive is verifiable against central finite differences.
report = grad_check(
    lambda v, f: tensor.sum_(tensor.conv1d_valid(v, f)),
    np.random.default_rng(0).normal(size=(1, 8, 3)),
    np.random.default_rng(1).normal(size=(2, 3, 3)),
)
print("conv1d gradient check:", report)

# A deliberately broken backward fails the same check.
def broken(v):
    doubled = Node(v.value * v.value, requires_grad=True, op="broken", parents=(v,),
                   backward=lambda g: tensor._accumulate(v, 4.0 * v.value * g))
    return tensor.sum_(doubled)

print("injected fault detected:", not grad_check(broken, np.array([1.0, 2.0])).passed)
