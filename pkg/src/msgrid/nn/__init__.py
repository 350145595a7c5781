"""Convolutional surrogate: kernels, forward pass, and weight files.

Kernel backend selection happens at import time: the compiled extension
is preferred, with the numpy implementation as fallback.  Set
MSG_KERNELS=python or MSG_KERNELS=compiled to force a backend (the
latter raises if the extension is missing).
"""

import os

from ..errors import ConfigError
from . import ops_py

_choice = os.environ.get("MSG_KERNELS", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise ConfigError(
        f"MSG_KERNELS must be one of auto/compiled/python, got {_choice!r}"
    )

if _choice == "python":
    ops = ops_py
    HAVE_COMPILED = False
else:
    try:
        from . import _kernels as ops

        HAVE_COMPILED = True
    except ImportError:
        if _choice == "compiled":
            raise ConfigError(
                "MSG_KERNELS=compiled but the compiled extension is not built"
            )
        ops = ops_py
        HAVE_COMPILED = False


def backend():
    """Name of the active kernel backend."""
    return "compiled" if ops is not ops_py else "python"


from .unet import UNetArch, UNetWeights, unet_forward  # noqa: E402
from .weights_io import load_weights, save_weights  # noqa: E402

__all__ = [
    "UNetArch",
    "UNetWeights",
    "unet_forward",
    "load_weights",
    "save_weights",
    "backend",
    "ops",
    "ops_py",
    "HAVE_COMPILED",
]
