"""Pick the compiled kernels when importable, else the numpy fallback.

Set ``XOVER_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("XOVER_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _pykernels as kernels

    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as kernels

        BACKEND = "python"

jacobi_eigh = kernels.jacobi_eigh
block_spectra = kernels.block_spectra

__all__ = ["BACKEND", "kernels", "jacobi_eigh", "block_spectra"]
