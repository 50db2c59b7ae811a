"""Kernel backend selection.

The compiled extension (seqrisk._kernels, Cython) is preferred when present;
the pure-numpy module (seqrisk._kernels_py) is the always-available fallback.
Selection happens once at import, per function: any op the compiled module
does not define falls through to the numpy one.  Set SEQRISK_BACKEND to
"python" or "compiled" to force a backend; "compiled" raises if the
extension is missing rather than silently degrading.
"""
from __future__ import annotations

import os

from . import _kernels_py

_OPS = (
    "lstm_seq_forward",
    "lstm_seq_backward",
    "local_lstm_forward",
    "local_lstm_backward",
    "joint_attention_forward",
    "joint_attention_backward",
    "temporal_attention_forward",
    "temporal_attention_backward",
)

_requested = os.environ.get("SEQRISK_BACKEND", "auto").lower()
if _requested not in ("auto", "python", "compiled"):
    raise ValueError(
        f"SEQRISK_BACKEND must be 'auto', 'python' or 'compiled', got {_requested!r}"
    )

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None
if _requested == "compiled" and _compiled is None:
    raise ImportError(
        "SEQRISK_BACKEND=compiled but the compiled kernel extension is not importable; "
        "reinstall with a C toolchain or unset SEQRISK_BACKEND"
    )

BACKEND = "compiled" if _compiled is not None else "python"


class _Dispatch:
    pass


ops = _Dispatch()
for _name in _OPS:
    _fn = getattr(_compiled, _name, None) if _compiled is not None else None
    setattr(ops, _name, _fn if _fn is not None else getattr(_kernels_py, _name))
del _name, _fn


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if _compiled is not None else ("python",)


def get_backend(name: str):
    """Return the raw kernel module for a backend name (for benchmarks/tests)."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel extension is not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
