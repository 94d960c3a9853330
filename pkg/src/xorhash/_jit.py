"""Optional numba acceleration.

Set ``XORHASH_DISABLE_NUMBA=1`` to run every kernel as plain Python over
numpy arrays. The fallback is bit-identical, only slower.
"""
import os

_disabled = os.environ.get("XORHASH_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator when numba is off."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
