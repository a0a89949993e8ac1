"""Pure-numpy kernel: the import-time fallback when the compiled extension is
unavailable. Must stay call-compatible with `_kernel`."""
import numpy as np

KERNEL = "python"


def forward(Ws, bs, x):
    """Dense forward for one vector: relu on hidden layers, identity output."""
    h = x
    last = len(Ws) - 1
    for i, (W, b) in enumerate(zip(Ws, bs)):
        h = h @ W + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h
