"""Backend selection for the hot per-tick kernels.

The compiled extension is preferred; the pure-NumPy fallback is used when the
extension is missing or TUNNELNAV_PURE_PY is set to a truthy value.
Both expose ekf_predict, ekf_range_update, run_straight_mission and BACKEND.
"""

import os

if os.environ.get("TUNNELNAV_PURE_PY", "") not in ("", "0"):
    from . import _purecore as _impl
else:
    try:
        from . import _fastcore as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _purecore as _impl

BACKEND = _impl.BACKEND
ekf_predict = _impl.ekf_predict
ekf_range_update = _impl.ekf_range_update
run_straight_mission = _impl.run_straight_mission
