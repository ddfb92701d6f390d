"""Backend selection for the numeric kernels.

Set ``TYPEMIX_NO_NUMBA=1`` to force the pure-numpy kernels. Without the
variable, numba is used when it can be imported.
"""

import os

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "boundscheck": False,
    "error_model": "numpy",
}

_TRUTHY = {"1", "true", "yes", "on"}


def numba_disabled_by_env():
    return os.environ.get("TYPEMIX_NO_NUMBA", "").strip().lower() in _TRUTHY


try:  # pragma: no cover - exercised implicitly
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

_backend = "numba" if HAS_NUMBA and not numba_disabled_by_env() else "numpy"


def get_backend():
    return _backend


def set_backend(name):
    """Switch kernels at runtime; returns the previous backend name."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous
