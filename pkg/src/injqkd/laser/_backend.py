"""Select the RK4 kernel: compiled extension if importable, else pure Python.

Set ``INJQKD_PURE_PYTHON=1`` to force the fallback.
"""
import contextlib
import os

from . import _kernel_py

try:
    from . import _kernel as compiled
except ImportError:
    compiled = None

kernel = _kernel_py
name = "python"
if compiled is not None and os.environ.get("INJQKD_PURE_PYTHON") != "1":
    kernel, name = compiled, "cython"


def use(backend: str) -> None:
    """Switch kernels at runtime (``"cython"`` or ``"python"``)."""
    global kernel, name
    if backend == "python":
        kernel, name = _kernel_py, "python"
    elif backend == "cython":
        if compiled is None:
            raise RuntimeError("compiled kernel is not available; build the extension first")
        kernel, name = compiled, "cython"
    else:
        raise ValueError(f"unknown backend {backend!r}")


@contextlib.contextmanager
def using(backend: str):
    """Temporarily switch kernels."""
    previous = name
    use(backend)
    try:
        yield
    finally:
        use(previous)
