"""Pure-NumPy kernels: the reference lane of the compiled/fallback pair.

The compiled twin in _kernels.pyx evaluates the same expressions with the
same association per element, so both lanes produce bit-identical results;
the equivalence tests assert exact equality, not tolerances. Keep any
change here mirrored there.

Everything is float64, C-contiguous, and mutates its `out`/state arguments
in place.
"""

import numpy as np


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, c1, c2):
    """One fused Adam update on flat float64 views.

    c1 = 1 - beta1**t and c2 = 1 - beta2**t are precomputed by the caller
    so both lanes see identical scalars. Updates param, m, v in place.
    """
    np.multiply(m, beta1, out=m)
    m += (1.0 - beta1) * grad
    np.multiply(v, beta2, out=v)
    v += (1.0 - beta2) * np.square(grad)
    step = m / c1
    denom = np.sqrt(v / c2)
    denom += eps
    np.divide(step, denom, out=step)
    step *= lr
    param -= step


def embedding_gather(emb, ids, out):
    """out[b] = concatenation of emb rows for ids[b, :]. Shapes: (V,d), (B,L), (B,L*d)."""
    rows, cols = ids.shape
    out[...] = emb[ids.reshape(-1)].reshape(rows, cols * emb.shape[1])


def embedding_scatter_add(grad_emb, ids, d_flat):
    """grad_emb[ids[b,l]] += d_flat[b, l*d:(l+1)*d], accumulated in row-major order."""
    d = grad_emb.shape[1]
    np.add.at(grad_emb, ids.reshape(-1), d_flat.reshape(-1, d))
