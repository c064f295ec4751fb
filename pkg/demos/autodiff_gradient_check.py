"""
Reverse-mode gradients and a finite-difference check
====================================================

"""

import numpy as np

from hlstm import tensor as T

rng = np.random.default_rng(0)

# two parameters and a small graph: sum(log(softmax(x W + b)))
W = T.parameter(rng.normal(size=(4, 3)), "W")
b = T.parameter(np.zeros(3), "b")
x = T.Tensor(rng.normal(size=(5, 4)))

with T.Tape() as tape:
    loss = T.scale(T.sum_all(T.log(T.softmax(x @ W + b))), -1.0)
grads = tape.backward(loss)
print("loss", float(loss.data))
print("dL/db", grads[b])

# softmax rows sum to one, so shifting b leaves the loss alone: dL/db sums to 0
print("sum of dL/db", grads[b].sum())

# the same loss as a function of the parameter list, checked against central differences
def f(params):
    w, bias = params
    return T.scale(T.sum_all(T.log(T.softmax(x @ w + bias))), -1.0)

err = T.finite_difference_oracle(f, [W, b], eps=1e-6)
print("max relative error", err)
