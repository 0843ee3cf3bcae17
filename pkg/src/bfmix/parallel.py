"""Thread-count plumbing shared by the FFTs and BLAS kernels."""

import os

from threadpoolctl import threadpool_limits

_threads = None


def get_threads():
    """Active worker count: ``BFMIX_THREADS`` if set, else the last ``set_threads`` value, else 1."""
    env = os.environ.get("BFMIX_THREADS")
    if env:
        return max(1, int(env))
    return _threads or 1


def set_threads(n):
    global _threads
    if n is not None and int(n) < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _threads = None if n is None else int(n)


def blas_limits():
    """Context manager pinning BLAS/OpenMP pools to the active thread count."""
    return threadpool_limits(limits=get_threads())
