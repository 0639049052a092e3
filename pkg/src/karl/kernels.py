"""Backend selection for the per-step kernels.

The compiled extension is used when it was built; setting
``KARL_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

FLUID_FLOW = _kernels_py.FLUID_FLOW
LORENZ = _kernels_py.LORENZ
DOUBLE_WELL = _kernels_py.DOUBLE_WELL

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("KARL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

monomials = _impl.monomials
drift = _impl.drift
rk4 = _impl.rk4
euler_maruyama = _impl.euler_maruyama
riccati_flow = _impl.riccati_flow


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def compiled():
    """The compiled module itself (raises ImportError when not built)."""
    from . import _kernels
    return _kernels
