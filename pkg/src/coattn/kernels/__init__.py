"""Backend selection for the hot numeric kernels.

Two interchangeable implementations exist: a numba-compiled one and a pure
NumPy one. The environment variable ``COATTN_BACKEND`` picks between them:

* unset or ``auto`` -- numba when it imports cleanly, NumPy otherwise
* ``numba``         -- require numba, fail loudly if unavailable
* ``numpy``         -- force the pure NumPy path

``benchmarks/bench_kernels.py`` times the two side by side.
"""

import os

from ..errors import ConfigError
from . import numpy_backend

_requested = os.environ.get("COATTN_BACKEND", "auto").strip().lower() or "auto"
if _requested not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"COATTN_BACKEND must be 'auto', 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    _impl = numpy_backend
else:
    try:
        from . import numba_backend as _impl
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_backend

BACKEND = _impl.BACKEND_NAME

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
embedding_grad_scatter = _impl.embedding_grad_scatter
