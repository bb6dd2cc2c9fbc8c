"""Kernel backend selection.

The compiled Cython backend is preferred when importable; set
``SQUEEZEKIT_BACKEND=numpy`` (or ``compiled``) to force a choice.
``active_backend()`` reports which one is in use so run archives can
record it.
"""

import os

from . import _ref

_requested = os.environ.get("SQUEEZEKIT_BACKEND", "").strip().lower()

if _requested == "numpy":
    _impl = _ref
elif _requested == "compiled":
    from . import _fast as _impl  # hard import: fail loudly when forced
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = _ref

causal_attention_probs = _impl.causal_attention_probs
decode_attention = _impl.decode_attention
weighted_average_rows = _ref.weighted_average_rows


def active_backend():
    return _impl.BACKEND_NAME


def backend_module(name):
    """Return a specific backend module ("numpy" or "compiled") by name."""
    if name == "numpy":
        return _ref
    if name == "compiled":
        from . import _fast

        return _fast
    raise ValueError(f"unknown backend {name!r}")
