"""Backend selection for the batched training kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``EARLYKD_PURE_PYTHON=1`` to force the fallback.
"""

import importlib
import os

from . import _kernels_py

VANILLA, GRU, LSTM = _kernels_py.VANILLA, _kernels_py.GRU, _kernels_py.LSTM
CELL_CODES = {"vanilla": VANILLA, "gru": GRU, "lstm": LSTM}


def load_backend(name: str | None = None):
    """Return a kernel module: ``"cython"``, ``"python"`` or ``None`` for auto."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("earlykd._kernels")
    if os.environ.get("EARLYKD_PURE_PYTHON"):
        return _kernels_py
    try:
        return importlib.import_module("earlykd._kernels")
    except ImportError:
        return _kernels_py


backend = load_backend()
BACKEND = backend.BACKEND_NAME


def available_backends() -> list[str]:
    names = ["python"]
    try:
        importlib.import_module("earlykd._kernels")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
