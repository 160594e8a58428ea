"""Kernel backend selection.

The compiled extension is preferred when it imports cleanly; the pure
lane is always available.  ``DOMCFTP_PURE=1`` in the environment forces
the pure lane.  Benchmarks and the equivalence tests address both lanes
explicitly via `available_backends`.
"""

import os

from . import pure

_active = pure
compiled = None

if os.environ.get("DOMCFTP_PURE") != "1":
    try:
        from .. import _speedups as compiled  # type: ignore[no-redef]

        _active = compiled
    except ImportError:
        compiled = None


def get_backend():
    return _active


def set_backend(module) -> None:
    """Swap the active kernel lane (used by tests and benchmarks)."""
    global _active
    _active = module


def available_backends() -> dict:
    lanes = {"pure": pure}
    if compiled is not None:
        lanes["compiled"] = compiled
    return lanes
