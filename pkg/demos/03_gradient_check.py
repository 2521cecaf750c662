"""The autodiff tape, and proof its gradients match finite differences.

First differentiates a tiny expression by hand on the tape, then runs the
full-model gradient check used by the acceptance suite.
"""

import numpy as np

from icurisk.autodiff import Tape, Tensor
from icurisk.model import ModelConfig, grad_check

# loss = sigmoid(w . x): d(loss)/dw should equal sigmoid' * x.
w = Tensor(np.array([[0.2, -0.4, 0.1]]))
x = Tensor(np.array([1.0, 2.0, -1.0]))
tape = Tape()
p = tape.sigmoid(tape.matmul(w, x))
tape.backward(p)

s = p.data[0]
print("forward value:", s)
print("tape gradient for w:   ", w.grad.ravel())
print("hand derivative s(1-s)x:", (s * (1 - s) * x.data))

print(f"\ntape recorded {len(tape.entries)} operations:",
      [e.op for e in tape.entries])

# Every parameter of a small bidirectional attention model, checked against
# central finite differences with step 1e-5.
config = ModelConfig(input_dim=5, hidden=3, heads=2, bidirectional=True,
                     dropout_in=0.0, dropout_out=0.0)
error = grad_check(config, seed=0, intervals=4)
print(f"\nfull-model gradient check, max relative error: {error:.2e}")
print("under the 1e-4 acceptance threshold:", error < 1e-4)
