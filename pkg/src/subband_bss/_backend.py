"""Select the IP-sweep implementation at import time.

The compiled core is used when it was built; set ``SUBBAND_BSS_BACKEND=python``
to force the NumPy fallback, or ``=compiled`` to fail loudly if it is missing.
"""
import logging
import os

from . import _ip_numpy

log = logging.getLogger(__name__)

_requested = os.environ.get("SUBBAND_BSS_BACKEND", "auto").lower()

try:
    from . import _ip_core
except ImportError:  # extension not built
    _ip_core = None
    if _requested == "compiled":
        raise

if _requested == "python" or _ip_core is None:
    BACKEND = "python"
    ip_sweep = _ip_numpy.ip_sweep
else:
    BACKEND = "compiled"
    ip_sweep = _ip_core.ip_sweep

log.debug("IP sweep backend: %s", BACKEND)


def available():
    """Mapping of backend name to IP-sweep function for every built backend."""
    out = {"python": _ip_numpy.ip_sweep}
    if _ip_core is not None:
        out["compiled"] = _ip_core.ip_sweep
    return out
