"""Kernel selection: compiled extension when built, numpy fallback otherwise.

Both expose the same `forward(Ws, bs, x)` contract. The choice affects speed
only; decoded results agree (same float64 math up to summation order, far
inside the argmax margins used downstream).
"""
try:
    from . import _kernel as kernel
except ImportError:  # extension not built
    from . import _kernel_py as kernel

KERNEL_NAME = kernel.KERNEL
forward = kernel.forward
