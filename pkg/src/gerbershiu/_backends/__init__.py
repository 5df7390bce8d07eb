"""Backend selection: compiled Cython core when built, NumPy fallback otherwise.

Set GERBERSHIU_BACKEND=python (or =compiled) before import to force a choice.
"""

from __future__ import annotations

import os

from . import reference

try:
    from . import _core as _compiled
except ImportError:  # extension not built; degrade to NumPy
    _compiled = None

_requested = os.environ.get("GERBERSHIU_BACKEND", "").strip().lower()
if _requested in ("python", "reference", "numpy"):
    active = reference
elif _requested in ("compiled", "cython", "core"):
    if _compiled is None:
        raise ImportError(
            "GERBERSHIU_BACKEND=compiled but the extension is not built; "
            "run `pip install -e .` with a C compiler available"
        )
    active = _compiled
elif _requested:
    raise ImportError(f"unknown GERBERSHIU_BACKEND value {_requested!r}")
else:
    active = _compiled if _compiled is not None else reference


def available_backends() -> dict:
    out = {"reference": reference}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
