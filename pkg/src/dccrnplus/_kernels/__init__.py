"""Hot loops with a compiled implementation and a numpy fallback.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``DCCRNPLUS_KERNELS=python`` is set, the numpy code in
:mod:`.fallback` is used.  :func:`use_backend` switches at runtime (for
benchmarks and cross-checks).
"""
import logging
import os

from . import fallback

log = logging.getLogger(__name__)

try:
    from . import _lstm as compiled
except ImportError:  # extension not built
    compiled = None

_BACKENDS = {"python": fallback}
if compiled is not None:
    _BACKENDS["compiled"] = compiled

backend = None
lstm_forward = None
lstm_backward = None


def available_backends():
    return list(_BACKENDS)


def use_backend(name: str) -> None:
    global backend, lstm_forward, lstm_backward
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    mod = _BACKENDS[name]
    backend = name
    lstm_forward = mod.lstm_forward
    lstm_backward = mod.lstm_backward


_requested = os.environ.get("DCCRNPLUS_KERNELS", "")
if _requested:
    use_backend(_requested)
else:
    use_backend("compiled" if compiled is not None else "python")
if backend == "python" and compiled is None:
    log.debug("compiled kernels not built; using numpy fallback")
