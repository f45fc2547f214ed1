"""Pure-NumPy reference implementation of the Lindblad RHS kernel."""

import numpy as np


def rhs(a, rho, ls, lds, rates, out, work):
    """out = a @ rho + rho @ a^dag + sum_k rates[k] * ls[k] @ rho @ lds[k].

    ``work`` is accepted for ABI compatibility with the compiled kernel and
    unused here; jump operators come pre-stacked as (n_channels, n, n) with
    their daggers in ``lds``.
    """
    np.matmul(a, rho, out=out)
    out += rho @ a.conj().T
    if rates.shape[0]:
        jump = np.matmul(np.matmul(ls, rho), lds)
        out += np.tensordot(rates, jump, axes=(0, 0))
    return out
