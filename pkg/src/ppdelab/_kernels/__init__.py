"""Kernel backend selection.

Imports the compiled extension when present, otherwise falls back to the
numpy reference implementation. ``PPDELAB_PURE=1`` forces the fallback
(used by the benchmark and the equivalence tests).
"""

import os

from . import reference

if os.environ.get("PPDELAB_PURE", "") == "1":
    impl = reference
else:
    try:
        from . import _fastpath as impl  # type: ignore[no-redef]
    except ImportError:
        impl = reference

BACKEND = impl.BACKEND

first_exit_radius = impl.first_exit_radius
first_exit_halfspaces = impl.first_exit_halfspaces
skeleton_scan = impl.skeleton_scan
euler_paths = impl.euler_paths

__all__ = [
    "BACKEND",
    "first_exit_radius",
    "first_exit_halfspaces",
    "skeleton_scan",
    "euler_paths",
    "reference",
]
