"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise, or when
``ULTRAFIT_BACKEND=python`` is set, the numpy reference implementation is
used.  :func:`use_backend` swaps the backend at runtime (tests, benchmarks).
"""

from __future__ import annotations

import os
import warnings

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_NAMES = (
    "bucket_bfs",
    "hash_bfs",
    "Harvester",
    "pair_extrema",
    "kruskal_select",
    "afn_query",
    "afn_query_batch",
    "afn_merge",
)
_active = None


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def use_backend(name: str) -> None:
    global _active
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        mod = _compiled
    elif name == "python":
        mod = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    g = globals()
    for fn in _NAMES:
        g[fn] = getattr(mod, fn)
    _active = name


def backend() -> str:
    return _active


_requested = os.environ.get("ULTRAFIT_BACKEND", "").strip().lower()
if _requested == "python" or _compiled is None:
    if _requested == "compiled":
        warnings.warn("ULTRAFIT_BACKEND=compiled but the extension is missing; using python kernels")
    use_backend("python")
else:
    use_backend("compiled")
