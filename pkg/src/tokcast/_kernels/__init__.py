"""Loss-kernel backends: compiled extension with a pure-numpy fallback.

The compiled backend is used when the extension built successfully; set
``TOKCAST_KERNELS=py`` to force the numpy backend or ``TOKCAST_KERNELS=c``
to require the compiled one (ImportError if it is unavailable). Both expose
the same three functions over C-contiguous float64 logit matrices:
``softmax``, ``cross_entropy`` and ``wasserstein``.
"""

import os

from . import _numpy

_requested = os.environ.get("TOKCAST_KERNELS", "auto").lower()
if _requested not in ("auto", "c", "py"):
    raise ValueError(f"TOKCAST_KERNELS must be one of auto/c/py, got {_requested!r}")

_compiled = None
if _requested in ("auto", "c"):
    try:
        from . import _core as _compiled
    except ImportError:
        if _requested == "c":
            raise ImportError(
                "TOKCAST_KERNELS=c but the compiled kernel extension is not "
                "available; rebuild with `python setup.py build_ext --inplace`"
            )

_active = _compiled if _compiled is not None else _numpy

BACKEND = _active.backend_name()

softmax = _active.softmax
cross_entropy = _active.cross_entropy
wasserstein = _active.wasserstein


def available_backends():
    """Names of the importable backends, compiled first when present."""
    return ("c", "python") if _compiled is not None else ("python",)


def get_backend(name: str):
    """Fetch a backend module by name ('c' or 'python'), for tests and benchmarks."""
    if name == "python":
        return _numpy
    if name == "c":
        if _compiled is None:
            raise ImportError("compiled kernel backend is not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
