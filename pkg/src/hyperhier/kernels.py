"""Kernel backend selection.

The compiled extension is used when importable; set ``HYPERHIER_PURE=1`` to
force the numpy implementation.
"""

import os

from . import _pykernels

if os.environ.get("HYPERHIER_PURE", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
hyp_logits = _impl.hyp_logits
hyp_loss_grad = _impl.hyp_loss_grad
pairwise_poincare = _impl.pairwise_poincare
pairwise_euclidean = _impl.pairwise_euclidean


def backends():
    """All importable backends, keyed by name."""
    found = {"numpy": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
