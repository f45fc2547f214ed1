"""Lindblad master-equation integration for piecewise-smooth drive envelopes.

The equation solved is

    drho/dt = -i [H(t), rho] + sum_k r_k ( L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho} )

with H in angular units (rad/s) and rates r_k in 1/s.  Integration uses an
adaptive embedded Runge-Kutta 4(5) pair (Dormand-Prince, via
``scipy.integrate.solve_ivp``) on the vectorized density matrix, restarted at
every envelope breakpoint so square-pulse edges are never stepped across.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .qops import DensityMatrix, HilbertSpace, Operator, annihilation, embed, identity, number

__all__ = [
    "TimeDependentHamiltonian",
    "CollapseChannel",
    "Trajectory",
    "IntegrationError",
    "evolve",
    "channels_from_coherence",
    "loss_channel",
]


class IntegrationError(RuntimeError):
    """Raised when the ODE integrator fails to converge; carries diagnostics."""


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """H(t) = static + sum_i coeff_i(t) * term_i, all matrices in rad/s.

    Parameters
    ----------
    space : HilbertSpace
    static : ndarray
        Time-independent part, Hermitian.
    terms : tuple of (callable, ndarray)
        Each entry pairs a real-valued coefficient function of time (s) with
        a constant Hermitian matrix.
    breakpoints : tuple of float
        Times (s) where any coefficient is non-smooth (pulse edges).  The
        integrator restarts at each one.

    The object is also callable: ``H(t)`` returns an :class:`Operator`.
    """

    space: HilbertSpace
    static: np.ndarray
    terms: tuple[tuple[Callable[[float], float], np.ndarray], ...] = ()
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        h0 = np.ascontiguousarray(self.static, dtype=complex)
        if h0.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"static part has shape {h0.shape}, expected {(self.space.dim,) * 2}"
            )
        scale = max(1.0, float(np.max(np.abs(h0))))
        if np.max(np.abs(h0 - h0.conj().T)) > 1e-9 * scale:
            raise ValueError("static Hamiltonian part is not Hermitian")
        terms = []
        for coeff, mat in self.terms:
            m = np.ascontiguousarray(mat, dtype=complex)
            if m.shape != h0.shape:
                raise ValueError("time-dependent term shape mismatch")
            mscale = max(1.0, float(np.max(np.abs(m))))
            if np.max(np.abs(m - m.conj().T)) > 1e-9 * mscale:
                raise ValueError("time-dependent term matrix is not Hermitian")
            terms.append((coeff, m))
        object.__setattr__(self, "static", h0)
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(
            self, "breakpoints", tuple(sorted(float(b) for b in set(self.breakpoints)))
        )

    @classmethod
    def from_operator(cls, op: Operator) -> "TimeDependentHamiltonian":
        return cls(op.space, op.matrix)

    def matrix_at(self, t: float, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = self.static.copy()
        else:
            np.copyto(out, self.static)
        for coeff, mat in self.terms:
            c = coeff(t)
            if c != 0.0:
                out += c * mat
        return out

    def __call__(self, t: float) -> Operator:
        return Operator(self.space, self.matrix_at(t))


@dataclass(frozen=True)
class CollapseChannel:
    """Unnormalized jump operator plus its rate (1/s), kept separate per the
    D[L] convention: the dissipator applied is rate * D[operator]."""

    operator: Operator
    rate: float
    label: str = ""

    def __post_init__(self):
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"collapse rate must be finite and >= 0, got {self.rate}")


@dataclass
class Trajectory:
    """Integration output: time grid, states, and named expectation series."""

    times: np.ndarray
    states: list[DensityMatrix] | None
    expectations: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def final(self) -> DensityMatrix:
        if self.states is None:
            raise ValueError("trajectory was run with store_states=False")
        return self.states[-1]


def _coerce_hamiltonian(hamiltonian) -> TimeDependentHamiltonian:
    if isinstance(hamiltonian, TimeDependentHamiltonian):
        return hamiltonian
    if isinstance(hamiltonian, Operator):
        return TimeDependentHamiltonian.from_operator(hamiltonian)
    raise TypeError(
        "hamiltonian must be a TimeDependentHamiltonian or a static Operator"
    )


# Tolerances applied when wrapping integrator output as DensityMatrix objects;
# matched to the solver's own drift guarantees rather than the strict 1e-9
# construction defaults.
_STATE_TOLS = dict(herm_tol=1e-6, trace_tol=1e-6, psd_tol=1e-6)


def evolve(
    hamiltonian,
    channels: list[CollapseChannel],
    rho0: DensityMatrix,
    times,
    *,
    observables: dict[str, Operator] | None = None,
    store_states: bool = True,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    max_step: float | None = None,
    backend: str | None = None,
) -> Trajectory:
    """Integrate the master equation over ``times``.

    Parameters
    ----------
    hamiltonian : TimeDependentHamiltonian or Operator
        Drive in rad/s.  Envelope breakpoints declared on the Hamiltonian
        become integrator restart points.
    channels : list of CollapseChannel
        Dissipation channels; zero-rate channels are skipped.
    rho0 : DensityMatrix
        Initial state on the same space.
    times : array_like
        Strictly increasing output grid (s); integration runs over
        [times[0], times[-1]].
    observables : dict, optional
        Named Hermitian operators; their expectation series are returned in
        ``Trajectory.expectations`` (real parts).
    store_states : bool
        Keep a DensityMatrix per output time.  The final state is always kept.
    rtol, atol : float
        Integrator tolerances on the vectorized density matrix.
    max_step : float, optional
        Hard cap on the internal step (s).
    backend : str, optional
        Kernel backend override ("python" or "cython").

    Raises
    ------
    IntegrationError
        On solver non-convergence, with the failing segment in the message.
    """
    ham = _coerce_hamiltonian(hamiltonian)
    space = ham.space
    if rho0.space != space:
        raise ValueError("rho0 is not on the Hamiltonian's space")
    tgrid = np.asarray(times, dtype=float)
    if tgrid.ndim != 1 or tgrid.size < 2:
        raise ValueError("times must be a 1-D grid with at least 2 entries")
    if np.any(np.diff(tgrid) <= 0):
        raise ValueError("times must be strictly increasing")
    for ch in channels:
        if ch.operator.space != space:
            raise ValueError(f"channel {ch.label or ch.operator!r} on a different space")

    n = space.dim
    active = [ch for ch in channels if ch.rate > 0.0]
    n_ch = len(active)
    ls = np.empty((n_ch, n, n), dtype=complex)
    lds = np.empty_like(ls)
    rates = np.empty(n_ch, dtype=float)
    for k, ch in enumerate(active):
        ls[k] = ch.operator.matrix
        lds[k] = ch.operator.matrix.conj().T
        rates[k] = ch.rate
    # anticommutator half of every dissipator, folded into the drift matrix
    damp = np.zeros((n, n), dtype=complex)
    for k in range(n_ch):
        damp += 0.5 * rates[k] * (lds[k] @ ls[k])

    kernel = _kernels.get_rhs(backend)
    hbuf = np.empty((n, n), dtype=complex)
    abuf = np.empty((n, n), dtype=complex)
    work = np.empty((n, n), dtype=complex)

    def fun(t, y):
        rho = y.reshape(n, n)
        ham.matrix_at(t, out=hbuf)
        np.multiply(hbuf, -1j, out=abuf)
        np.subtract(abuf, damp, out=abuf)
        out = np.empty((n, n), dtype=complex)
        kernel(abuf, np.ascontiguousarray(rho), ls, lds, rates, out, work)
        return out.reshape(-1)

    t0, t_end = float(tgrid[0]), float(tgrid[-1])
    cuts = [b for b in ham.breakpoints if t0 < b < t_end]
    edges = [t0, *cuts, t_end]

    result = np.empty((tgrid.size, n, n), dtype=complex)
    result[0] = rho0.matrix
    y = rho0.matrix.reshape(-1).astype(complex)
    filled = 1
    for a, b in zip(edges[:-1], edges[1:]):
        inside = tgrid[(tgrid > a) & (tgrid <= b)]
        t_eval = inside if inside.size and inside[-1] == b else np.append(inside, b)
        sol = solve_ivp(
            fun,
            (a, b),
            y,
            method="RK45",
            t_eval=t_eval,
            rtol=rtol,
            atol=atol,
            max_step=np.inf if max_step is None else max_step,
        )
        if not sol.success:
            raise IntegrationError(
                f"integrator failed on segment [{a:.3e}, {b:.3e}] s: {sol.message}"
            )
        y = sol.y[:, -1].copy()
        m = inside.size
        if m:
            result[filled : filled + m] = sol.y[:, :m].T.reshape(m, n, n)
            filled += m
    assert filled == tgrid.size

    expectations: dict[str, np.ndarray] = {}
    if observables:
        for name, op in observables.items():
            if op.space != space:
                raise ValueError(f"observable {name!r} on a different space")
            expectations[name] = np.real(
                np.einsum("ij,tji->t", op.matrix, result, optimize=True)
            )

    if store_states:
        states = [DensityMatrix(space, result[i], **_STATE_TOLS) for i in range(tgrid.size)]
    else:
        states = [DensityMatrix(space, result[-1], **_STATE_TOLS)]
        states = [None] * (tgrid.size - 1) + states  # keep .final well-defined
    return Trajectory(times=tgrid, states=states, expectations=expectations)


def channels_from_coherence(
    T1: float, T2: float, space: HilbertSpace, index, *, label: str = ""
) -> list[CollapseChannel]:
    """Relaxation + pure-dephasing channels for one subsystem.

    Relaxation: lowering operator at rate 1/T1.  Pure dephasing: the operator
    (I - 2 n) at rate gamma_phi = (1/T2 - 1/(2 T1))/2, which makes coherences
    to the ground state decay at exactly 1/T2 for any truncation (on a
    two-level subsystem the operator is sigma_z).

    T2 may not exceed 2*T1 (within 1e-12 relative).
    """
    if T1 <= 0 or T2 <= 0:
        raise ValueError("coherence times must be positive")
    if T2 > 2.0 * T1 * (1.0 + 1e-12):
        raise ValueError(f"T2={T2} exceeds the 2*T1={2*T1} limit")
    if isinstance(index, str):
        index = space.index(index)
    d = space.dims[index]
    lower = embed(annihilation(d), space, index)
    zlike = identity(space) - 2.0 * embed(number(d), space, index)
    gamma_phi = max(0.0, (1.0 / T2 - 1.0 / (2.0 * T1)) / 2.0)
    prefix = label or space.labels[index]
    return [
        CollapseChannel(lower, 1.0 / T1, label=f"{prefix}:relax"),
        CollapseChannel(zlike, gamma_phi, label=f"{prefix}:dephase"),
    ]


def loss_channel(space: HilbertSpace, index, rate: float, *, label: str = "") -> CollapseChannel:
    """Photon-loss channel: lowering operator on one subsystem at ``rate``."""
    if isinstance(index, str):
        index = space.index(index)
    lower = embed(annihilation(space.dims[index]), space, index)
    return CollapseChannel(lower, rate, label=label or f"{space.labels[index]}:loss")
