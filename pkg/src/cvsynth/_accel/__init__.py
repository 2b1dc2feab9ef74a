"""Backend selection for the hot contraction kernels.

The compiled Cython extension is used when it was built; otherwise the
numpy implementation takes over. Set ``CVSYNTH_BACKEND=pure`` or
``=compiled`` to force one (forcing the compiled backend raises if the
extension is missing).
"""

from __future__ import annotations

import os

from . import pure

_requested = os.environ.get("CVSYNTH_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "pure", "compiled"):
    raise ImportError(
        f"CVSYNTH_BACKEND={_requested!r}: expected 'auto', 'pure', or 'compiled'"
    )


def _load_compiled():
    from . import _core  # noqa: PLC0415

    return _core


backend_name = "pure"
_impl = pure
if _requested == "compiled":
    _impl = _load_compiled()
    backend_name = "compiled"
elif _requested == "auto":
    try:
        _impl = _load_compiled()
        backend_name = "compiled"
    except ImportError:
        pass

offset_matmul_forward = _impl.offset_matmul_forward
offset_matmul_backward_data = _impl.offset_matmul_backward_data
offset_matmul_backward_weights = _impl.offset_matmul_backward_weights


def compiled_or_none():
    """The compiled module if importable, else None (for benchmarks/tests)."""
    try:
        return _load_compiled()
    except ImportError:
        return None
