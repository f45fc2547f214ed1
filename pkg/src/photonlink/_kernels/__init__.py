"""Right-hand-side kernels for the master-equation integrator.

Two interchangeable implementations of the same contract:

``rhs(a, rho, ls, lds, rates, out, work)``
    fills  out = a @ rho + rho @ a^dag + sum_k rates[k] * ls[k] @ rho @ lds[k]
    in place (the return value is unspecified; callers keep their own
    reference to the buffer)

where ``a = -i H(t) - 0.5 * sum_k rates[k] * L_k^dag L_k`` is assembled by the
caller (the anticommutator half of every dissipator is folded into ``a`` once
per call, so the kernel only sees 2 + 2*n_channels matrix products).

The compiled Cython version is selected at import when available; set
``PHOTONLINK_KERNEL=python`` or ``=cython`` to force a backend.
"""

import os

from . import _lindblad_py

_FORCED = os.environ.get("PHOTONLINK_KERNEL", "").strip().lower()
if _FORCED not in ("", "python", "cython"):
    raise ImportError(
        f"PHOTONLINK_KERNEL={_FORCED!r} not understood (use 'python' or 'cython')"
    )

_cython_mod = None
_cython_error = None
if _FORCED in ("", "cython"):
    try:
        from . import _lindblad_cy as _cython_mod
    except ImportError as exc:  # extension not built on this install
        _cython_error = exc
        if _FORCED == "cython":
            raise ImportError(
                "PHOTONLINK_KERNEL=cython but the compiled kernel is not importable"
            ) from exc

if _FORCED == "python" or _cython_mod is None:
    BACKEND = "python"
    rhs = _lindblad_py.rhs
else:
    BACKEND = "cython"
    rhs = _cython_mod.rhs


def available_backends() -> tuple[str, ...]:
    return ("python", "cython") if _cython_mod is not None else ("python",)


def get_rhs(backend: str | None = None):
    """Return the RHS kernel for an explicit backend (default: the active one)."""
    if backend is None:
        return rhs
    if backend == "python":
        return _lindblad_py.rhs
    if backend == "cython":
        if _cython_mod is None:
            raise ValueError("cython kernel unavailable on this install") from _cython_error
        return _cython_mod.rhs
    raise ValueError(f"unknown kernel backend {backend!r}")
