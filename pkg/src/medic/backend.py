"""Kernel backend selection.

The hot inner loops exist twice: compiled numba kernels and vectorized numpy
equivalents. Set ``MEDIC_BACKEND=numpy`` to force the fallback (useful for
debugging and for the backend benchmark), ``MEDIC_BACKEND=numba`` to require
the compiled path, or leave it unset to pick numba when importable. The
choice is made once at import time.
"""

from __future__ import annotations

import os

from . import _kernels_numpy
from .errors import MedicError


def select_kernels(choice: str | None = None):
    """Resolve a backend name to its kernel module.

    Returns ``(module, name)``. ``choice`` defaults to the ``MEDIC_BACKEND``
    environment variable.
    """
    if choice is None:
        choice = os.environ.get("MEDIC_BACKEND", "auto")
    choice = choice.strip().lower() or "auto"
    if choice == "numpy":
        return _kernels_numpy, "numpy"
    if choice == "numba":
        from . import _kernels_numba

        return _kernels_numba, "numba"
    if choice == "auto":
        try:
            from . import _kernels_numba

            return _kernels_numba, "numba"
        except ImportError:
            return _kernels_numpy, "numpy"
    raise MedicError(f"MEDIC_BACKEND must be 'numba', 'numpy' or 'auto', got '{choice}'")


kernels, BACKEND = select_kernels()
