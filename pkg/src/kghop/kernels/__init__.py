"""Kernel backend selection.

Prefers the compiled extension (`_fast`), falls back to the pure-Python
implementation when the extension is missing or KGHOP_PURE_PYTHON is set.
"""

import os

from . import _pure

_backend = _pure
BACKEND = "pure-python"

if not os.environ.get("KGHOP_PURE_PYTHON"):
    try:
        from . import _fast

        _backend = _fast
        BACKEND = "cython"
    except ImportError:
        pass

hash_ngram_features = _backend.hash_ngram_features
gae_scan = _backend.gae_scan
transe_sgd_epoch = _backend.transe_sgd_epoch


def backend_name():
    return BACKEND


def available_backends():
    """name -> module for every importable backend (used by tests/benchmarks)."""
    out = {"pure-python": _pure}
    try:
        from . import _fast as fast_mod

        out["cython"] = fast_mod
    except ImportError:
        pass
    return out
