"""Hot-kernel backend selection: compiled extension with NumPy fallback.

The training inner loop spends most of its time in three memory-bound
operations (the fused Adam update over every parameter, the embedding
gather, and the embedding scatter-add where `np.add.at` is slow). Those
live behind this package in two interchangeable lanes:

- `_kernels`: the Cython extension, used when it built;
- `reference`: pure NumPy, always available.

Both lanes are bit-identical (see tests/test_backend.py), so which one is
active never changes any result, only the wall clock. Matrix products are
not kernels: both lanes leave those to BLAS via numpy.

Set MEDSPECIALTY_BACKEND=compiled|reference to force a lane; the default
picks the extension when importable.
"""

import os

from ..errors import ConfigError
from . import reference


def _load_compiled():
    from . import _kernels  # noqa: PLC0415 - import is the availability probe

    return _kernels


_requested = os.environ.get("MEDSPECIALTY_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        kernels = _load_compiled()
        BACKEND = "compiled"
    except ImportError:
        kernels = reference
        BACKEND = "reference"
elif _requested in ("compiled", "cython"):
    kernels = _load_compiled()
    BACKEND = "compiled"
elif _requested in ("reference", "python", "numpy"):
    kernels = reference
    BACKEND = "reference"
else:
    raise ConfigError(
        f"MEDSPECIALTY_BACKEND must be 'auto', 'compiled' or 'reference', got {_requested!r}"
    )


def get_backend(name: str):
    """Load a lane by name regardless of the import-time selection."""
    name = name.strip().lower()
    if name in ("compiled", "cython"):
        return _load_compiled()
    if name in ("reference", "python", "numpy"):
        return reference
    raise ConfigError(f"unknown backend {name!r}")
