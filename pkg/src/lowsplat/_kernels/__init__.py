"""Kernel backend selection.

The compiled extension (``_core``) is used when importable; otherwise the
pure-Python fallback (``_pure``). Both implement identical arithmetic (same
operation order, IEEE-754 doubles, libm exp), so selection never changes
results, only speed. Set ``LOWSPLAT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pure

_force_pure = os.environ.get("LOWSPLAT_PURE_PYTHON", "") not in ("", "0")

if not _force_pure:
    try:
        from . import _core
    except ImportError:
        _core = None
else:
    _core = None

_active = _core if _core is not None else _pure

BACKEND = "compiled" if _active is not _pure else "pure-python"

forward = _active.forward
backward = _active.backward


def get_backend(name: str | None = None):
    """Return (module, label); ``name`` in {None, "compiled", "pure-python"}."""
    if name is None:
        return _active, BACKEND
    if name == "pure-python":
        return _pure, "pure-python"
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernel backend is not available")
        return _core, "compiled"
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    out = ["pure-python"]
    if _core is not None:
        out.insert(0, "compiled")
    return out
