"""
LSTM and BiLSTM over padded batches
===================================

"""

import numpy as np

from hlstm.layers import LstmParams, bilstm, lstm_sequence
from hlstm.tensor import Tensor

rng = np.random.default_rng(1)
p_fw = LstmParams.init(6, 4, rng, prefix="fw")
p_bw = LstmParams.init(6, 4, rng, prefix="bw")

# three sequences of lengths 5, 3 and 1, padded to 5 steps
xs = rng.normal(size=(3, 5, 6))
mask = np.arange(5)[None, :] < np.array([5, 3, 1])[:, None]

hs, final = lstm_sequence(Tensor(xs), mask, p_fw)
print("outputs", hs.shape)
# padded steps emit zeros and the final state is the one after the last real step
print("row 1, step 4:", hs.data[1, 4])
print("final h of row 1 equals step 2:", np.array_equal(final.h.data[1], hs.data[1, 2]))

# padding content never leaks in
noisy = xs.copy()
noisy[~mask] = 1e3
hs2, _ = lstm_sequence(Tensor(noisy), mask, p_fw)
print("padding invariant:", np.array_equal(hs.data, hs2.data))

# bidirectional outputs are [forward ; backward] per step
out, _ = bilstm(Tensor(xs), mask, p_fw, p_bw)
print("bilstm outputs", out.shape)
