"""Select the compiled string kernels when built, else the Python ones.

Set ``KGQA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("KGQA_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"

levenshtein = _impl.levenshtein
similarity = _impl.similarity
similarity_many = _impl.similarity_many
fnv1a_64 = _impl.fnv1a_64
trigram_counts = _impl.trigram_counts

__all__ = [
    "BACKEND",
    "levenshtein",
    "similarity",
    "similarity_many",
    "fnv1a_64",
    "trigram_counts",
]
