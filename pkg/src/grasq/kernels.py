"""Kernel selection: the compiled module when available, else pure Python.

Set ``GRASQ_PURE_PYTHON=1`` to force the fallback.
"""

import os

from grasq import _pykernels

_impl = _pykernels
if os.environ.get("GRASQ_PURE_PYTHON") != "1":
    try:
        from grasq import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

COMPILED = _impl is not _pykernels
BACKEND = "compiled" if COMPILED else "python"

wedge = _impl.wedge
pfaffian_elim = _impl.pfaffian
wick_eval = _impl.wick_eval
wick_eval_product = _impl.wick_eval_product

bit_indices = _pykernels.bit_indices
merge_sign = _pykernels.merge_sign
prefix_parity = _pykernels.prefix_parity
