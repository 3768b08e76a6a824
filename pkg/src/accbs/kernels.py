"""Backend selection for the search kernels.

The compiled extension is used when it imported cleanly; otherwise the
pure-Python twin takes over.  Set ``ACCBS_PURE=1`` to force the fallback
(useful for debugging and for benchmarking the two side by side).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("ACCBS_PURE"):
    _impl = _kernels_py
    BACKEND = "pure"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "pure"

bfs_distance_field = _impl.bfs_distance_field
plan_trajectory = _impl.plan_trajectory
path_cost = _impl.path_cost
find_first_conflict = _impl.find_first_conflict
count_conflicts = _impl.count_conflicts

F_CAP = _kernels_py.F_CAP
V_CAP = _kernels_py.V_CAP
T_CAP = _kernels_py.T_CAP
