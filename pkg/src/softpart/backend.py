"""Select the compiled kernels when available, the numpy twin otherwise.

Set SOFTPART_BACKEND=py or =c to force a choice (=c raises if the extension
was not built).
"""
import os

from . import _reference

VALID = ("auto", "c", "py")


def load_backend(choice: str | None = None):
    """Return (kernel module, name) for an explicit or environment choice."""
    if choice is None:
        choice = os.environ.get("SOFTPART_BACKEND", "auto")
    if choice not in VALID:
        raise ValueError(f"backend must be one of {VALID}, got {choice!r}")
    if choice in ("auto", "c"):
        try:
            from . import _speedups

            return _speedups, "c"
        except ImportError:
            if choice == "c":
                raise
    return _reference, "py"


kernels, backend_name = load_backend()
