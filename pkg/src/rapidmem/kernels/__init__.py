"""Hot kernels with a compiled back end and a numpy fallback.

The compiled extension is used when it was built and importable; setting
``RAPIDMEM_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels as python

compiled = None
if os.environ.get("RAPIDMEM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else python

BACKEND = _impl.BACKEND
cut_detection_batch = _impl.cut_detection_batch
neighbor_sum = _impl.neighbor_sum

__all__ = ["BACKEND", "compiled", "python", "cut_detection_batch", "neighbor_sum"]
