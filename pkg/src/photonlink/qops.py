"""Finite-dimensional operator algebra on labelled tensor-product spaces.

Everything downstream (Hamiltonian assembly, the master-equation solver,
tomography) works with the three types defined here.  Matrices are plain
``numpy.ndarray`` of ``complex128``; the wrapper types pin down the tensor
structure and enforce the invariants that the physics relies on (hermiticity,
unit trace, positivity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

__all__ = [
    "HilbertSpace",
    "Operator",
    "DensityMatrix",
    "annihilation",
    "number",
    "identity",
    "embed",
    "expect",
    "partial_trace",
    "state_fidelity",
    "basis_state",
    "random_density_matrix",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of finite-dimensional subsystems.

    Parameters
    ----------
    dims : tuple of int
        Dimension of each subsystem, every entry >= 2.
    labels : tuple of str, optional
        One label per subsystem.  Auto-generated (``"s0"``, ``"s1"``, ...)
        when omitted.  Labels must be unique.
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise ValueError("HilbertSpace needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {dims}")
        labels = self.labels or tuple(f"s{i}" for i in range(len(dims)))
        labels = tuple(str(x) for x in labels)
        if len(labels) != len(dims):
            raise ValueError("need exactly one label per subsystem")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels: {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        """Total dimension (product of subsystem dimensions)."""
        out = 1
        for d in self.dims:
            out *= d
        return out

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    def index(self, label: str) -> int:
        """Position of the subsystem named ``label``."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no subsystem {label!r} in {self.labels}") from None


def _as_square_complex(matrix, dim: int | None = None) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValueError(f"matrix dimension {m.shape[0]} does not match space dimension {dim}")
    return m


class Operator:
    """A linear operator tied to a :class:`HilbertSpace`.

    The matrix is copied on construction and frozen (read-only view) so that
    shared operators cannot be mutated behind the solver's back.  Arithmetic
    (+, -, scalar *, @) requires both operands to live on the same space.
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        m = _as_square_complex(matrix, space.dim).copy()
        m.flags.writeable = False
        self.space = space
        self.matrix = m

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def _check_space(self, other: "Operator"):
        if self.space != other.space:
            raise ValueError(
                f"operators live on different spaces: {self.space.labels} vs {other.space.labels}"
            )

    def __add__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def __repr__(self):
        return f"Operator(dim={self.space.dim}, labels={self.space.labels})"


class DensityMatrix:
    """A physical state: Hermitian, unit trace, positive semidefinite.

    Construction validates all three properties.  Tolerances default to 1e-9;
    the solver relaxes them to its own drift bound (1e-6) when wrapping
    integrator output.

    Raises
    ------
    ValueError
        If the matrix fails hermiticity, trace, or positivity at the given
        tolerances.
    """

    __slots__ = ("space", "matrix")

    def __init__(
        self,
        space: HilbertSpace,
        matrix,
        *,
        herm_tol: float = 1e-9,
        trace_tol: float = 1e-9,
        psd_tol: float = 1e-9,
    ):
        m = _as_square_complex(matrix, space.dim)
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if herm_err > herm_tol:
            raise ValueError(f"not Hermitian: max |rho - rho^dag| = {herm_err:.3e} > {herm_tol:.1e}")
        trace_err = abs(np.trace(m) - 1.0)
        if trace_err > trace_tol:
            raise ValueError(f"trace differs from 1 by {trace_err:.3e} > {trace_tol:.1e}")
        min_eig = float(np.linalg.eigvalsh((m + m.conj().T) / 2.0).min())
        if min_eig < -psd_tol:
            raise ValueError(f"not positive semidefinite: min eigenvalue {min_eig:.3e} < -{psd_tol:.1e}")
        m = m.copy()
        m.flags.writeable = False
        self.space = space
        self.matrix = m

    @classmethod
    def from_state_vector(cls, space: HilbertSpace, psi) -> "DensityMatrix":
        """Pure state |psi><psi| from a normalized state vector."""
        v = np.asarray(psi, dtype=complex).reshape(-1)
        if v.shape[0] != space.dim:
            raise ValueError(f"state vector length {v.shape[0]} != space dimension {space.dim}")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"state vector norm {nrm} is not 1 within 1e-9")
        return cls(space, np.outer(v, v.conj()))

    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.matrix, self.matrix)))

    def __repr__(self):
        return f"DensityMatrix(dim={self.space.dim}, labels={self.space.labels})"


def annihilation(dim: int) -> Operator:
    """Bosonic lowering operator truncated to ``dim`` levels.

    On a two-level subsystem this is the qubit lowering operator sigma_minus
    (ground state first).
    """
    if dim < 2:
        raise ValueError("annihilation needs dim >= 2")
    m = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    return Operator(HilbertSpace((dim,)), m)


def number(dim: int) -> Operator:
    """Number operator diag(0, 1, ..., dim-1)."""
    return Operator(HilbertSpace((dim,)), np.diag(np.arange(dim, dtype=float)))


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.dim))


def embed(op: Operator, space: HilbertSpace, index) -> Operator:
    """Lift a single-subsystem operator into ``space`` at position ``index``.

    Parameters
    ----------
    op : Operator
        Operator on a single subsystem whose dimension matches
        ``space.dims[index]``.
    space : HilbertSpace
        Target tensor-product space.
    index : int or str
        Subsystem position or label.
    """
    if isinstance(index, str):
        index = space.index(index)
    if not 0 <= index < space.n_subsystems:
        raise IndexError(f"subsystem index {index} out of range for {space.labels}")
    if op.space.dim != space.dims[index]:
        raise ValueError(
            f"operator dimension {op.space.dim} does not match subsystem "
            f"{space.labels[index]!r} dimension {space.dims[index]}"
        )
    mats = [np.eye(d) for d in space.dims]
    mats[index] = op.matrix
    return Operator(space, reduce(np.kron, mats))


def expect(op: Operator, rho: DensityMatrix) -> complex:
    """Tr(op @ rho).  Real part is the physical expectation for Hermitian op."""
    if op.space != rho.space:
        raise ValueError("operator and state live on different spaces")
    return complex(np.einsum("ij,ji->", op.matrix, rho.matrix))


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the subsystems in ``keep`` (indices or labels).

    The kept subsystems retain their original relative order.
    """
    space = rho.space
    keep_idx = sorted(space.index(k) if isinstance(k, str) else int(k) for k in keep)
    if not keep_idx:
        raise ValueError("must keep at least one subsystem")
    if len(set(keep_idx)) != len(keep_idx):
        raise ValueError("duplicate subsystems in keep")
    if any(not 0 <= k < space.n_subsystems for k in keep_idx):
        raise IndexError(f"keep={keep} out of range for {space.labels}")

    n = space.n_subsystems
    dims = space.dims
    t = rho.matrix.reshape(dims + dims)
    # trace out, highest index first so earlier positions stay valid
    traced = [i for i in range(n) if i not in keep_idx]
    for i in sorted(traced, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    d_keep = 1
    for k in keep_idx:
        d_keep *= dims[k]
    sub = HilbertSpace(
        tuple(dims[k] for k in keep_idx), tuple(space.labels[k] for k in keep_idx)
    )
    return DensityMatrix(
        sub, t.reshape(d_keep, d_keep), herm_tol=1e-7, trace_tol=1e-6, psd_tol=1e-6
    )


def state_fidelity(rho: DensityMatrix, psi) -> float:
    """Fidelity <psi| rho |psi> of a state against a pure target.

    ``psi`` must be normalized within 1e-9.  The result is clipped to [0, 1]
    only for roundoff excursions below 1e-9; anything larger raises.
    """
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.shape[0] != rho.space.dim:
        raise ValueError("target vector dimension does not match the state")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > 1e-9:
        raise ValueError(f"target vector norm {nrm} is not 1 within 1e-9")
    f = float(np.real(v.conj() @ rho.matrix @ v))
    if f < -1e-9 or f > 1.0 + 1e-9:
        raise ValueError(f"fidelity {f} outside [0,1] beyond roundoff")
    return min(max(f, 0.0), 1.0)


def basis_state(space: HilbertSpace, occupations) -> np.ndarray:
    """Product basis vector |n_0, n_1, ...> as a flat numpy array."""
    occ = tuple(int(x) for x in occupations)
    if len(occ) != space.n_subsystems:
        raise ValueError("need one occupation number per subsystem")
    for n_i, d in zip(occ, space.dims):
        if not 0 <= n_i < d:
            raise ValueError(f"occupation {n_i} out of range for dimension {d}")
    idx = 0
    for n_i, d in zip(occ, space.dims):
        idx = idx * d + n_i
    v = np.zeros(space.dim, dtype=complex)
    v[idx] = 1.0
    return v


def random_density_matrix(space: HilbertSpace, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state from the Ginibre ensemble (full rank by default)."""
    d = space.dim
    r = d if rank is None else int(rank)
    if not 1 <= r <= d:
        raise ValueError(f"rank must be in [1, {d}]")
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return DensityMatrix(space, m / np.trace(m))
