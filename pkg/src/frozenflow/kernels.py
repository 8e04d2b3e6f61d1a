"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy implementation in ``_pykernels`` takes over.  Setting the environment
variable ``FROZENFLOW_BACKEND=python`` forces the fallback.
"""

import os

from . import _pykernels

GAUSSIAN = _pykernels.GAUSSIAN
THREEPOINT = _pykernels.THREEPOINT
RADEMACHER = _pykernels.RADEMACHER


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


def get_backend(name: str | None = None):
    """Return the kernel module called ``name`` ("cython" or "python").

    ``None`` picks the compiled one when available.
    """
    if name == "python":
        return _pykernels
    compiled = _load_compiled()
    if name == "cython" and compiled is None:
        raise ImportError("compiled kernels are not built; run `pip install -e .`")
    return compiled or _pykernels


_impl = get_backend("python" if os.environ.get("FROZENFLOW_BACKEND", "").lower() == "python" else None)
BACKEND = _impl.NAME

draw = _impl.draw
uniforms = _impl.uniforms
step_keys = _impl.step_keys
so3_apply = _impl.so3_apply
sphere_flow = _impl.sphere_flow
cauchy_flow = _impl.cauchy_flow
