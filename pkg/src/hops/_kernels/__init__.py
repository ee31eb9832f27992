"""Hot-kernel backend selection.

Two interchangeable backends exist: a Cython extension (``_native``) and a
pure-numpy fallback (``_pylib``). The compiled one is picked when importable;
set HOPS_BACKEND=python to force the fallback or HOPS_BACKEND=native to make a
missing extension a hard error. ``benchmarks/bench_kernels.py`` compares both.
"""
import os

_choice = os.environ.get("HOPS_BACKEND", "auto").lower()

if _choice in ("python", "numpy"):
    from . import _pylib as _impl
    BACKEND = "python"
elif _choice in ("auto", "native", "cython"):
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
        BACKEND = "native"
    except ImportError:
        if _choice != "auto":
            raise
        from . import _pylib as _impl
        BACKEND = "python"
else:
    raise ValueError(f"unknown HOPS_BACKEND value: {_choice!r}")

sinkhorn_log_loop = _impl.sinkhorn_log_loop
sinkhorn_linear_loop = _impl.sinkhorn_linear_loop
hard_counts = _impl.hard_counts
soft_counts = _impl.soft_counts
fnv1a64 = _impl.fnv1a64

__all__ = [
    "BACKEND",
    "sinkhorn_log_loop",
    "sinkhorn_linear_loop",
    "hard_counts",
    "soft_counts",
    "fnv1a64",
]
