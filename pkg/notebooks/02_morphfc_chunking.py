"""
How MorphFC cuts a feature map into chunks
==========================================

Tokens are scanned row by row (horizontal) or column by column (vertical),
cut into runs of L tokens, and every run of L tokens x D channels is one
vector for a dense L*D x L*D matrix.
"""

# %%
import numpy as np

from morphmlp.morphfc import MorphFC, chunk_fc, chunk_split
from morphmlp.oracle import block_diagonal, naive_morphfc
from morphmlp.tensor import Tensor, no_grad

x = np.arange(5 * 5 * 2, dtype=float).reshape(5, 5, 2)
chunks, plan = chunk_split(Tensor(x), "horizontal", 4, 1)
print(plan)
print("chunk 0, group 0 holds tokens", chunks.data[0, 0])
print("last chunk is padded:", chunks.data[-1, 0])

# %%
# The fast path agrees with a scalar-loop transcription of the layer.
rng = np.random.default_rng(0)
layer = MorphFC(4, 4, 2, gate=True, rng=rng, dtype=np.float64)
layer.gate.data = rng.standard_normal(layer.gate.shape)
y = rng.standard_normal((6, 7, 4))
with no_grad():
    fast = layer(Tensor(y)).data
ref = naive_morphfc(y, layer.weight_h.data, layer.weight_v.data, layer.channel.weight.data,
                    layer.channel.bias.data, 4, 2, layer.gate.data)
print("max |fast - oracle| =", np.max(np.abs(fast - ref)))

# %%
# Along one channel group, the horizontal pathway is a block-diagonal matrix
# applied to the flattened row-major token sequence: nothing crosses a chunk
# boundary, and each chunk gets the whole matrix (no sliding window).
wh = rng.standard_normal((4, 4))
z = rng.standard_normal((4, 4, 1))
big = block_diagonal(wh, 4)
with no_grad():
    path = chunk_fc(Tensor(z), Tensor(wh), "horizontal", 4, 1).data
print("block-diagonal agreement:", np.max(np.abs(z.reshape(-1) @ big - path.reshape(-1))))
