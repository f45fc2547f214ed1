"""Dispersive-readout simulation and two-qubit state reconstruction.

Readout is modeled as one four-dimensional Gaussian voltage cloud per
two-qubit basis state (two quadratures per qubit, shared isotropic
covariance) with nearest-centroid classification. Misassignment is summarized
by a 4x4 confusion matrix; measured frequencies are corrected by solving the
corresponding linear system before reconstruction.

State reconstruction follows the usual two-step scheme: a linear Pauli
estimator (fast, possibly unphysical) and a least-squares refinement over a
factorized parameterization that enforces positivity and unit trace.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .qops import DensityMatrix, HilbertSpace

__all__ = [
    "ReadoutModel",
    "ConfusionMatrix",
    "TomographySetting",
    "MleConvergenceError",
    "tomography_settings",
    "simulate_measurement",
    "calibrate_confusion",
    "analytic_confusion",
    "correct_populations",
    "measure_state",
    "pauli_expectations",
    "linear_estimate",
    "mle_reconstruct",
    "bell_fidelity",
    "clipped_bell_objective",
    "project_to_physical",
]

BASIS_LABELS = ("gg", "ge", "eg", "ee")

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _rotation(name: str) -> np.ndarray:
    """Single-qubit pre-rotation by name: I, X90, Y90, X-90, Y-90."""
    if name == "I":
        return np.eye(2, dtype=complex)
    axis, sign = name[0], (-1.0 if name.endswith("-90") else 1.0)
    theta = sign * np.pi / 2.0
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    if axis == "X":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "Y":
        return np.array([[c, -s], [s, c]])
    raise ValueError(f"unknown rotation {name!r}")


# rotating by U and then measuring Z reads out U^dag Z U = sign * pauli
_MEASURED_PAULI = {
    "I": ("Z", 1.0),
    "Y90": ("X", -1.0),
    "Y-90": ("X", 1.0),
    "X90": ("Y", 1.0),
    "X-90": ("Y", -1.0),
}


@dataclass(frozen=True)
class TomographySetting:
    """A pre-rotation pair, optionally carrying its measured populations."""

    rotations: tuple[str, str]
    populations: np.ndarray | None = None

    def __post_init__(self):
        for name in self.rotations:
            if name not in _MEASURED_PAULI:
                raise ValueError(f"unknown rotation {name!r}")

    def unitary(self) -> np.ndarray:
        return np.kron(_rotation(self.rotations[0]), _rotation(self.rotations[1]))

    def with_populations(self, populations) -> "TomographySetting":
        p = np.asarray(populations, dtype=float)
        if p.shape != (4,):
            raise ValueError("populations must be a length-4 vector")
        return replace(self, populations=p)


def tomography_settings() -> tuple[TomographySetting, ...]:
    """The 17 distinct pre-rotation pairs used for two-qubit tomography.

    Union of the positive set {I, Y90, X90} squared and the negative set
    {I, Y-90, X-90} squared; the shared identity pair appears once.
    """
    seen: list[tuple[str, str]] = []
    for group in (("I", "Y90", "X90"), ("I", "Y-90", "X-90")):
        for r1 in group:
            for r2 in group:
                if (r1, r2) not in seen:
                    seen.append((r1, r2))
    return tuple(TomographySetting(pair) for pair in seen)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic assignment matrix: entry [i, j] is the probability of
    classifying basis state j given basis state i was prepared."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("confusion matrix must be 4x4")
        if m.min() < 0 or m.max() > 1:
            raise ValueError("confusion entries must lie in [0, 1]")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("confusion rows must sum to 1 within 1e-9")
        if np.linalg.matrix_rank(m) < 4:
            raise ValueError("confusion matrix is singular")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    @classmethod
    def identity(cls) -> "ConfusionMatrix":
        return cls(np.eye(4))


@dataclass(frozen=True)
class ReadoutModel:
    """Gaussian voltage clouds for joint two-qubit dispersive readout.

    ``centroids`` holds one 4-vector (I1, Q1, I2, Q2) per basis state in the
    order gg, ge, eg, ee; all clouds share the isotropic per-axis width
    ``sigma_v``. Voltage units are arbitrary; the default geometry puts unit
    separation between the ground and excited centroid of each qubit.
    """

    centroids: np.ndarray
    sigma_v: float
    shots: int = 10_000

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float)
        if c.shape != (4, 4):
            raise ValueError("need one 4D centroid per two-qubit basis state")
        if self.sigma_v <= 0:
            raise ValueError("sigma_v must be positive")
        if self.shots < 1:
            raise ValueError("shots must be a positive integer")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @classmethod
    def default(cls, sigma_v: float = 0.304, shots: int = 10_000) -> "ReadoutModel":
        """Unit-separation geometry; the default width gives ~5% error per qubit."""
        # basis order gg, ge, eg, ee; excitation of qubit 1 shifts I1, of qubit 2 shifts I2
        centroids = np.array(
            [
                [0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
                [1.0, 0.0, 1.0, 0.0],
            ]
        )
        return cls(centroids, sigma_v, shots)

    @classmethod
    def with_assignment_error(cls, p_error: float, shots: int = 10_000) -> "ReadoutModel":
        """Unit-separation clouds sized for a per-qubit misassignment rate.

        With equal isotropic clouds a nearest-centroid classifier errs with
        probability 1 - Phi(d / (2 sigma)) per qubit, inverted here for the
        requested rate.
        """
        if not 0 < p_error < 0.5:
            raise ValueError("p_error must lie in (0, 0.5)")
        sigma = 0.5 / float(norm.ppf(1.0 - p_error))
        return cls.default(sigma_v=sigma, shots=shots)

    def per_qubit_error(self) -> tuple[float, float]:
        """Analytic nearest-centroid misassignment probability per qubit."""
        out = []
        for ground, excited in ((0, 2), (0, 1)):
            d = float(np.linalg.norm(self.centroids[excited] - self.centroids[ground]))
            out.append(float(norm.sf(d / (2.0 * self.sigma_v))))
        return tuple(out)  # type: ignore[return-value]


def _born_probabilities(rho: np.ndarray, setting: TomographySetting) -> np.ndarray:
    u = setting.unitary()
    probs = np.real(np.diag(u @ rho @ u.conj().T))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def simulate_measurement(
    rho: DensityMatrix | np.ndarray,
    setting: TomographySetting,
    model: ReadoutModel,
    seed,
) -> np.ndarray:
    """Sample classified counts for one tomography setting.

    Applies the setting's pre-rotations, draws basis outcomes from the Born
    probabilities, draws a 4D voltage from the outcome's Gaussian cloud, and
    classifies each shot by nearest centroid. Returns integer counts over
    (gg, ge, eg, ee) summing to ``model.shots``; fixed seeds reproduce counts
    exactly.
    """
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    rng = np.random.default_rng(seed)
    probs = _born_probabilities(matrix, setting)
    true_counts = rng.multinomial(model.shots, probs)
    counts = np.zeros(4, dtype=np.int64)
    for k, n in enumerate(true_counts):
        if n == 0:
            continue
        volts = rng.normal(model.centroids[k], model.sigma_v, size=(int(n), 4))
        d2 = ((volts[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
        assigned = np.argmin(d2, axis=1)
        counts += np.bincount(assigned, minlength=4)
    return counts


def calibrate_confusion(model: ReadoutModel, seed) -> ConfusionMatrix:
    """Empirical confusion matrix from simulated basis-state preparations."""
    rng = np.random.default_rng(seed)
    identity_setting = TomographySetting(("I", "I"))
    rows = []
    for k in range(4):
        rho = np.zeros((4, 4), dtype=complex)
        rho[k, k] = 1.0
        counts = simulate_measurement(rho, identity_setting, model, rng.integers(2**63))
        rows.append(counts / model.shots)
    return ConfusionMatrix(np.array(rows))


def analytic_confusion(model: ReadoutModel) -> ConfusionMatrix:
    """Closed-form confusion matrix for independent per-qubit Gaussian clouds."""
    p1, p2 = model.per_qubit_error()
    c1 = np.array([[1 - p1, p1], [p1, 1 - p1]])
    c2 = np.array([[1 - p2, p2], [p2, 1 - p2]])
    return ConfusionMatrix(np.kron(c1, c2))


def correct_populations(counts, confusion: ConfusionMatrix) -> np.ndarray:
    """Undo readout misassignment on measured counts or frequencies.

    Measured frequencies satisfy f = C^T p for true populations p, so the
    correction solves that system. The result sums to 1 but may carry small
    negative entries; downstream reconstruction tolerates them.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (4,):
        raise ValueError("counts must be a length-4 vector")
    total = counts.sum()
    if total <= 0:
        raise ValueError("counts must contain at least one shot")
    freqs = counts / total
    return np.linalg.solve(confusion.matrix.T, freqs)


def measure_state(
    rho: DensityMatrix | np.ndarray,
    model: ReadoutModel,
    confusion: ConfusionMatrix,
    master_seed: int,
    settings: tuple[TomographySetting, ...] | None = None,
) -> tuple[TomographySetting, ...]:
    """Run every tomography setting on a state and attach corrected populations.

    Per-setting seeds are derived deterministically from ``master_seed`` so the
    full measurement set is reproducible and could be distributed safely.
    """
    if settings is None:
        settings = tomography_settings()
    out = []
    for i, setting in enumerate(settings):
        seed = np.random.SeedSequence(master_seed, spawn_key=(i,))
        counts = simulate_measurement(rho, setting, model, seed)
        out.append(setting.with_populations(correct_populations(counts, confusion)))
    return tuple(out)


def _require_populations(settings) -> tuple[TomographySetting, ...]:
    settings = tuple(settings)
    for s in settings:
        if s.populations is None:
            raise ValueError(f"setting {s.rotations} has no measured populations")
    return settings


def pauli_expectations(settings) -> dict[tuple[str, str], float]:
    """Average two-qubit Pauli expectations out of measured settings.

    Each setting measures one signed Pauli per qubit; joint and marginal
    parities of its populations estimate the corresponding products. Labels
    measured by several settings are averaged.
    """
    settings = _require_populations(settings)
    sums: dict[tuple[str, str], list[float]] = {}
    parity1 = np.array([1.0, 1.0, -1.0, -1.0])
    parity2 = np.array([1.0, -1.0, 1.0, -1.0])
    for s in settings:
        (pa, sa), (pb, sb) = (_MEASURED_PAULI[r] for r in s.rotations)
        p = s.populations
        joint = float(np.sum(p * parity1 * parity2))
        m1 = float(np.sum(p * parity1))
        m2 = float(np.sum(p * parity2))
        sums.setdefault((pa, pb), []).append(sa * sb * joint)
        sums.setdefault((pa, "I"), []).append(sa * m1)
        sums.setdefault(("I", pb), []).append(sb * m2)
    out = {key: float(np.mean(vals)) for key, vals in sums.items()}
    out[("I", "I")] = 1.0
    return out


def linear_estimate(expectations: dict[tuple[str, str], float]) -> np.ndarray:
    """Direct inversion of the Pauli decomposition.

    Returns sum_ij c_ij (sigma_i x sigma_j) / 4 with c from ``expectations``;
    Hermitian with unit trace, but not necessarily positive.
    """
    missing = [
        (a, b)
        for a in _PAULI
        for b in _PAULI
        if (a, b) not in expectations
    ]
    if missing:
        raise ValueError(f"missing Pauli expectations: {missing}")
    rho = np.zeros((4, 4), dtype=complex)
    for (a, b), value in expectations.items():
        rho += value * np.kron(_PAULI[a], _PAULI[b])
    return rho / 4.0


class MleConvergenceError(RuntimeError):
    """Raised when the least-squares refinement hits its iteration cap.

    The best density matrix found so far is attached as ``rho``.
    """

    def __init__(self, message: str, rho: DensityMatrix):
        super().__init__(message)
        self.rho = rho


_UPPER = np.triu_indices(4, k=1)


def _cholesky_to_rho(t: np.ndarray) -> np.ndarray:
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = t[:4]
    T[_UPPER] = t[4:10] + 1j * t[10:16]
    rho = T.conj().T @ T
    return rho / np.real(np.trace(rho))


def _rho_to_cholesky(rho: np.ndarray) -> np.ndarray:
    # stabilize: the projected linear estimate may be singular
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 1e-10, None)
    stabilized = (v * w) @ v.conj().T
    stabilized /= np.real(np.trace(stabilized))
    L = np.linalg.cholesky(stabilized)
    T = L.conj().T  # upper triangular with rho = T^dag T
    t = np.zeros(16)
    t[:4] = np.real(np.diag(T))
    t[4:10] = np.real(T[_UPPER])
    t[10:16] = np.imag(T[_UPPER])
    return t


def project_to_physical(rho: np.ndarray) -> np.ndarray:
    """Zero negative eigenvalues and renormalize the trace."""
    rho = np.asarray(rho, dtype=complex)
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        return np.eye(rho.shape[0], dtype=complex) / rho.shape[0]
    out = (v * w) @ v.conj().T
    return out / np.real(np.trace(out))


def _least_squares_cost(settings, rho: np.ndarray) -> float:
    cost = 0.0
    for s in settings:
        u = s.unitary()
        predicted = np.real(np.diag(u @ rho @ u.conj().T))
        cost += float(np.sum((predicted - s.populations) ** 2))
    return cost


def mle_reconstruct(
    settings,
    *,
    max_iterations: int = 10_000,
    tol: float = 1e-10,
) -> DensityMatrix:
    """Most-likely physical state for a full set of measured settings.

    Minimizes the summed squared residual between predicted rotated-basis
    populations and the corrected measurements, over the factorization
    rho = T^dag T / Tr(T^dag T) that keeps iterates physical. Starts from the
    linear estimate projected onto physical states; quasi-Newton descent on
    the 16 real parameters stops when the cost stalls below ``tol``.

    Raises
    ------
    MleConvergenceError
        If the iteration cap is reached first; the best state found is
        attached to the exception.
    """
    settings = _require_populations(settings)
    start_rho = project_to_physical(linear_estimate(pauli_expectations(settings)))
    t0 = _rho_to_cholesky(start_rho)

    def cost(t):
        return _least_squares_cost(settings, _cholesky_to_rho(t))

    result = minimize(
        cost,
        t0,
        method="L-BFGS-B",
        options={"maxiter": max_iterations, "ftol": tol, "gtol": 1e-12},
    )
    rho = _cholesky_to_rho(result.x)
    space = HilbertSpace((2, 2), ("q1", "q2"))
    state = DensityMatrix(space, rho, herm_tol=1e-8, trace_tol=1e-8, psd_tol=1e-8)
    if not result.success and result.nit >= max_iterations:
        raise MleConvergenceError(
            f"no convergence in {max_iterations} iterations "
            f"(final cost {result.fun:.3e})",
            state,
        )
    return state


def bell_fidelity(rho) -> float:
    """Overlap with (|ge> + |eg>)/sqrt(2), maximized over a local z phase.

    The optimum over a virtual z rotation replaces the real part of the
    cross coherence by its magnitude, so this is the fidelity after ideal
    single-qubit phase correction.
    """
    m = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho)
    return float(0.5 * (m[1, 1].real + m[2, 2].real) + abs(m[1, 2]))


def clipped_bell_objective(rho) -> float:
    """Conservative Bell-state score used inside closed-loop optimization.

    Takes elementwise magnitudes, clips diagonal entries at one half, and
    evaluates the overlap with (|ge> + |eg>)/sqrt(2). Robust to the drifting
    single-qubit phases of an uncorrected estimate, but intentionally not a
    fidelity; report fidelities from a reconstructed state instead.
    """
    m = np.abs(np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho))
    d = np.minimum(np.diag(m), 0.5)
    return float(0.5 * (d[1] + d[2] + m[1, 2] + m[2, 1]))
