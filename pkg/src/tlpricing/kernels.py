"""Kernel backend selection.

At import time the compiled extension ``tlpricing._speedups`` is preferred;
the numpy implementation in ``tlpricing._kernels_py`` is the fallback.
Setting the environment variable ``TLPRICING_PURE_PYTHON=1`` forces the
fallback (useful for benchmarking and debugging).  Both backends implement
the same functions with the same semantics; ``BACKEND`` reports which one is
active.
"""

from __future__ import annotations

import os

from . import _kernels_py

bisect_iterations = _kernels_py.bisect_iterations
DENOM_FLOOR = _kernels_py.DENOM_FLOOR

_impl = _kernels_py
if not os.environ.get("TLPRICING_PURE_PYTHON"):
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND

solve_log_lambda = _impl.solve_log_lambda
log_amounts = _impl.log_amounts
solve_smoothed_lambda = _impl.solve_smoothed_lambda
smoothed_amounts = _impl.smoothed_amounts
smoothed_slopes = _impl.smoothed_slopes


def backends() -> dict[str, object]:
    """All importable backends, keyed by name (for tests and benchmarks)."""
    found: dict[str, object] = {"python": _kernels_py}
    try:
        from . import _speedups

        found[_speedups.BACKEND] = _speedups
    except ImportError:
        pass
    return found
