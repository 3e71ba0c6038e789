"""Backend selection for the permutation-test kernels.

The compiled extension is used when it imports; otherwise, or when
``MTCASCADE_PURE_PYTHON=1`` is set, the numpy fallback is used.
"""

from __future__ import annotations

import os

from . import _permfallback

try:
    if os.environ.get("MTCASCADE_PURE_PYTHON") == "1":
        raise ImportError("compiled kernels disabled by MTCASCADE_PURE_PYTHON")
    from . import _permkernel as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _permfallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    name = BACKEND if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
