"""Backend selection for the LSTM sequence kernels.

The compiled extension is used when available; the pure-numpy fallback is
selected otherwise, or when EVCATCH_KERNELS=python is set. Both backends
implement the same contract (see ``_kernels_py``); results agree to
floating-point roundoff, not bit-for-bit.
"""

import os

from . import _kernels_py

if os.environ.get("EVCATCH_KERNELS", "").lower() == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
