"""Online Gaussian-process optimization of entangling pulse parameters.

The loop mirrors a closed-loop experiment: each iteration proposes ten pulse
parameter sets (one quasi-Newton maximizer of the surrogate mean, seven
random draws filtered by predicted value, two pure random draws), scores
each through a noisy objective callback, refits the surrogate, and appends a
JSON-lines trace record. Runs resume cleanly from their trace file, and every
random draw derives from the master seed, the iteration index, and the
candidate index, so results are reproducible for any scheduling.

The surrogate is a squared-exponential Gaussian process with per-dimension
length scales and an observation-noise term, with hyperparameters set by
maximizing the log marginal likelihood.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .protocols import bell_protocol
from .tomography import (
    ConfusionMatrix,
    ReadoutModel,
    bell_fidelity,
    clipped_bell_objective,
    linear_estimate,
    measure_state,
    mle_reconstruct,
    pauli_expectations,
)

__all__ = [
    "ParameterBox",
    "GpSurrogate",
    "OptimizationRecord",
    "OptimizationResult",
    "gp_fit",
    "propose_candidates",
    "optimize_bell",
    "make_bell_experiment",
    "make_bell_evaluator",
]

logger = logging.getLogger(__name__)

N_QUASI_NEWTON = 1
N_FILTERED = 7
N_RANDOM = 2
N_CANDIDATES = N_QUASI_NEWTON + N_FILTERED + N_RANDOM


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned search domain for (eps1, eps2, len1, len2).

    Drive frequencies are not free parameters: the DC-offset calibration maps
    each amplitude to its resonant modulation frequency, leaving four knobs.
    """

    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] = ("eps1", "eps2", "len1", "len2")

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be matching 1D arrays")
        if len(self.names) != lo.size:
            raise ValueError("need one name per dimension")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be below its upper bound")
        lo, hi = lo.copy(), hi.copy()
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def ndim(self) -> int:
        return self.lower.size

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, u) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.denormalize(rng.uniform(size=(n, self.ndim)))


def _se_kernel(U, V, signal_var, length_scales):
    d = (U[:, None, :] - V[None, :, :]) / length_scales
    return signal_var * np.exp(-0.5 * np.sum(d * d, axis=2))


@dataclass(frozen=True)
class GpSurrogate:
    """Fitted squared-exponential GP over box-normalized inputs.

    Targets are standardized internally; ``predict`` reports in the original
    units. The factorization is computed once at construction.
    """

    box: ParameterBox
    X: np.ndarray  # raw coordinates, (n, d)
    y: np.ndarray  # raw targets, (n,)
    signal_var: float
    length_scales: np.ndarray  # (d,), in normalized units
    noise_var: float
    _U: np.ndarray = field(repr=False, default=None)
    _chol: np.ndarray = field(repr=False, default=None)
    _alpha: np.ndarray = field(repr=False, default=None)
    _y_mean: float = field(repr=False, default=0.0)
    _y_scale: float = field(repr=False, default=1.0)

    @classmethod
    def from_hyperparameters(cls, X, y, box, signal_var, length_scales, noise_var):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise ValueError("X and y lengths differ")
        U = box.normalize(X)
        y_mean = float(np.mean(y))
        y_scale = float(np.std(y))
        if y_scale < 1e-12:
            y_scale = 1.0
        z = (y - y_mean) / y_scale
        length_scales = np.asarray(length_scales, dtype=float)
        K = _se_kernel(U, U, signal_var, length_scales)
        L = _robust_cholesky(K + noise_var * np.eye(len(U)))
        alpha = solve_triangular(
            L.T, solve_triangular(L, z, lower=True), lower=False
        )
        return cls(
            box=box,
            X=X,
            y=y,
            signal_var=float(signal_var),
            length_scales=length_scales,
            noise_var=float(noise_var),
            _U=U,
            _chol=L,
            _alpha=alpha,
            _y_mean=y_mean,
            _y_scale=y_scale,
        )

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at raw-coordinate query points."""
        q = np.atleast_2d(np.asarray(x, dtype=float))
        Uq = self.box.normalize(q)
        k = _se_kernel(Uq, self._U, self.signal_var, self.length_scales)
        mean_z = k @ self._alpha
        v = solve_triangular(self._chol, k.T, lower=True)
        var_z = self.signal_var - np.sum(v * v, axis=0)
        mean = self._y_mean + self._y_scale * mean_z
        var = np.clip(var_z, 0.0, None) * self._y_scale**2
        return mean, var

    @property
    def best_observed(self) -> np.ndarray:
        return self.X[int(np.argmax(self.y))]


def _robust_cholesky(K: np.ndarray) -> np.ndarray:
    jitter = 0.0
    for attempt in range(8):
        try:
            return cholesky(K + jitter * np.eye(len(K)), lower=True)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * 10**attempt
            logger.warning("kernel matrix not positive definite, adding jitter %.1e", jitter)
    raise np.linalg.LinAlgError("kernel matrix could not be factorized")


def _negative_log_marginal(theta, U, z):
    """Value and gradient of the negative log marginal likelihood.

    theta = log(signal_var), log(length_scales...), log(noise_var).
    """
    n, d = U.shape
    signal_var = np.exp(theta[0])
    length_scales = np.exp(theta[1 : 1 + d])
    noise_var = np.exp(theta[1 + d])
    diff = U[:, None, :] - U[None, :, :]
    scaled = diff / length_scales
    sq = np.sum(scaled * scaled, axis=2)
    K = signal_var * np.exp(-0.5 * sq)
    Ky = K + noise_var * np.eye(n)
    try:
        L = cholesky(Ky + 1e-12 * np.eye(n), lower=True)
    except np.linalg.LinAlgError:
        return np.inf, np.zeros_like(theta)
    alpha = solve_triangular(L.T, solve_triangular(L, z, lower=True), lower=False)
    nll = 0.5 * z @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * np.log(2 * np.pi)

    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(theta)
    grad[0] = -0.5 * np.sum(W * K)  # dK/dlog(sv) = K
    for j in range(d):
        dK = K * (scaled[:, :, j] ** 2)  # dK/dlog(ls_j)
        grad[1 + j] = -0.5 * np.sum(W * dK)
    grad[1 + d] = -0.5 * np.trace(W) * noise_var
    return float(nll), grad


def gp_fit(X, y, box: ParameterBox) -> GpSurrogate:
    """Fit kernel hyperparameters by maximizing the marginal likelihood.

    Quasi-Newton ascent from a small set of fixed starting points; the best
    optimum wins. Raises on fewer than two observations or a degenerate
    (all-duplicate) design, where no length scale is identifiable.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations to fit a surrogate")
    for row in X:
        if not box.contains(row):
            raise ValueError(f"training point {row} falls outside the box")
    if np.allclose(X, X[0], atol=1e-12):
        raise ValueError("all training inputs are identical; surrogate is degenerate")

    U = box.normalize(X)
    y_mean, y_scale = float(np.mean(y)), float(np.std(y))
    if y_scale < 1e-12:
        y_scale = 1.0
    z = (y - y_mean) / y_scale

    d = U.shape[1]
    bounds = (
        [(np.log(1e-4), np.log(1e3))]
        + [(np.log(5e-3), np.log(10.0))] * d
        + [(np.log(1e-8), np.log(1.0))]
    )
    starts = [
        np.log(np.r_[1.0, np.full(d, 0.3), 1e-2]),
        np.log(np.r_[1.0, np.full(d, 1.0), 1e-4]),
        np.log(np.r_[0.5, np.full(d, 0.1), 1e-1]),
    ]
    best = None
    for theta0 in starts:
        res = minimize(
            _negative_log_marginal,
            theta0,
            args=(U, z),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
        )
        if best is None or res.fun < best.fun:
            best = res
    theta = best.x
    return GpSurrogate.from_hyperparameters(
        X,
        y,
        box,
        signal_var=float(np.exp(theta[0])),
        length_scales=np.exp(theta[1 : 1 + d]),
        noise_var=float(np.exp(theta[1 + d])),
    )


def propose_candidates(gp: GpSurrogate, box: ParameterBox, seed, *,
                       pool_size: int = 256) -> list[tuple[np.ndarray, str]]:
    """Ten candidates per iteration, tagged by provenance.

    One from multi-start bounded quasi-Newton maximization of the posterior
    mean, seven as the best predictions out of ``pool_size`` uniform draws,
    two uniform at random. Output is deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    d = box.ndim

    def neg_mean(u):
        mean, _ = gp.predict(box.denormalize(u))
        return -float(mean[0])

    starts = [box.normalize(gp.best_observed)]
    starts.extend(rng.uniform(size=(4, d)))
    best_u, best_val = None, np.inf
    for u0 in starts:
        res = minimize(neg_mean, u0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * d)
        if res.fun < best_val:
            best_u, best_val = res.x, res.fun
    candidates = [(box.denormalize(np.clip(best_u, 0.0, 1.0)), "surrogate-argmax")]

    pool = box.sample(rng, pool_size)
    mean, _ = gp.predict(pool)
    for idx in np.argsort(mean)[::-1][:N_FILTERED]:
        candidates.append((pool[idx], "filtered-random"))

    for row in box.sample(rng, N_RANDOM):
        candidates.append((row, "pure-random"))
    return candidates


@dataclass
class OptimizationRecord:
    """One optimizer iteration: the candidates tried and the running best."""

    iteration: int
    candidates: list[dict]
    best_params: np.ndarray | None
    best_objective: float
    skipped: bool = False
    error: str = ""

    def to_json(self) -> str:
        payload = {
            "iteration": self.iteration,
            "candidates": [
                {
                    "params": list(map(float, c["params"])),
                    "provenance": c["provenance"],
                    "objective": (None if c["objective"] is None else float(c["objective"])),
                }
                for c in self.candidates
            ],
            "best_params": (
                None if self.best_params is None else list(map(float, self.best_params))
            ),
            "best_objective": float(self.best_objective),
            "skipped": self.skipped,
            "error": self.error,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, line: str) -> "OptimizationRecord":
        d = json.loads(line)
        return cls(
            iteration=int(d["iteration"]),
            candidates=[
                {
                    "params": np.asarray(c["params"], dtype=float),
                    "provenance": c["provenance"],
                    "objective": c["objective"],
                }
                for c in d["candidates"]
            ],
            best_params=(
                None if d["best_params"] is None else np.asarray(d["best_params"])
            ),
            best_objective=float(d["best_objective"]),
            skipped=bool(d.get("skipped", False)),
            error=d.get("error", ""),
        )


@dataclass
class OptimizationResult:
    best_params: np.ndarray
    best_objective: float
    records: list[OptimizationRecord]
    final_fidelity: float | None = None


def _candidate_seed(master_seed, iteration, index) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(iteration, index))


def optimize_bell(
    experiment,
    box: ParameterBox,
    iterations: int,
    seed: int,
    *,
    trace_path: str | Path | None = None,
    resume: bool = False,
    final_evaluator=None,
    pool_size: int = 256,
) -> OptimizationResult:
    """Closed-loop surrogate optimization of a noisy objective.

    ``experiment(params, seed)`` returns the objective for one parameter
    vector (larger is better). The first iteration draws all candidates at
    random to bootstrap the surrogate; later iterations follow the 1 + 7 + 2
    proposal split. A failing experiment call skips and logs that iteration
    without poisoning the observation set. When ``trace_path`` is given, one
    JSON record per iteration is appended, and ``resume=True`` continues an
    interrupted run from the trace contents. ``final_evaluator(params)``,
    when given, rescores the best parameters once at the end (typically a
    higher-shot phase-corrected reconstruction).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    trace_path = Path(trace_path) if trace_path is not None else None

    records: list[OptimizationRecord] = []
    X: list[np.ndarray] = []
    y: list[float] = []
    start_iteration = 0
    if resume:
        if trace_path is None:
            raise ValueError("resume requires a trace_path")
        if trace_path.exists():
            for line in trace_path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = OptimizationRecord.from_json(line)
                records.append(rec)
                for c in rec.candidates:
                    if c["objective"] is not None:
                        X.append(np.asarray(c["params"], dtype=float))
                        y.append(float(c["objective"]))
            start_iteration = records[-1].iteration + 1 if records else 0
    elif trace_path is not None and trace_path.exists():
        trace_path.unlink()

    best_params = None
    best_objective = -np.inf
    for rec in records:
        if rec.best_params is not None and rec.best_objective > best_objective:
            best_params = np.asarray(rec.best_params, dtype=float)
            best_objective = float(rec.best_objective)

    for it in range(start_iteration, iterations):
        have_surrogate = len(X) >= 2 and not np.allclose(np.asarray(X), X[0], atol=1e-12)
        if have_surrogate:
            gp = gp_fit(np.asarray(X), np.asarray(y), box)
            candidates = propose_candidates(
                gp, box, _candidate_seed(seed, it, 0), pool_size=pool_size
            )
        else:
            rng = np.random.default_rng(_candidate_seed(seed, it, 0))
            candidates = [(row, "pure-random") for row in box.sample(rng, N_CANDIDATES)]

        evaluated = []
        try:
            for j, (params, provenance) in enumerate(candidates):
                value = float(
                    experiment(params, _candidate_seed(seed, it, j + 1))
                )
                evaluated.append(
                    {"params": params, "provenance": provenance, "objective": value}
                )
        except Exception as exc:  # noqa: BLE001 - the callback is user code
            logger.warning("iteration %d skipped: %s", it, exc)
            record = OptimizationRecord(
                iteration=it,
                candidates=[
                    {"params": p, "provenance": tag, "objective": None}
                    for p, tag in candidates
                ],
                best_params=best_params,
                best_objective=best_objective,
                skipped=True,
                error=str(exc),
            )
            records.append(record)
            if trace_path is not None:
                with trace_path.open("a") as fh:
                    fh.write(record.to_json() + "\n")
            continue

        for entry in evaluated:
            X.append(np.asarray(entry["params"], dtype=float))
            y.append(entry["objective"])
            if entry["objective"] > best_objective:
                best_objective = entry["objective"]
                best_params = np.asarray(entry["params"], dtype=float)

        record = OptimizationRecord(
            iteration=it,
            candidates=evaluated,
            best_params=best_params,
            best_objective=best_objective,
        )
        records.append(record)
        if trace_path is not None:
            with trace_path.open("a") as fh:
                fh.write(record.to_json() + "\n")

    if best_params is None:
        raise RuntimeError("every iteration failed; no parameters were evaluated")

    final = None
    if final_evaluator is not None:
        final = float(final_evaluator(best_params))
    return OptimizationResult(
        best_params=best_params,
        best_objective=best_objective,
        records=records,
        final_fidelity=final,
    )


# ---------------------------------------------------------------------------
# wiring to the simulated experiment


def make_bell_experiment(
    link,
    readout: ReadoutModel,
    confusion: ConfusionMatrix,
    *,
    shots: int = 2000,
):
    """In-loop objective: entangle, measure, linearly estimate, clip.

    No phase correction is applied inside the loop; the clipped objective is
    insensitive to deterministic single-qubit phases, which is exactly why it
    is used while optimizing.
    """
    model = ReadoutModel(readout.centroids, readout.sigma_v, shots)

    def experiment(params, seed) -> float:
        eps1, eps2, len1, len2 = (float(v) for v in params)
        result = bell_protocol(
            link, eps1, eps2, len1, len2, phase_correction=0.0
        )
        master = int(np.random.default_rng(seed).integers(2**63))
        settings = measure_state(result.state, model, confusion, master)
        estimate = linear_estimate(pauli_expectations(settings))
        return clipped_bell_objective(estimate)

    return experiment


def make_bell_evaluator(
    link,
    readout: ReadoutModel,
    confusion: ConfusionMatrix,
    *,
    shots: int = 10_000,
    seed: int = 0,
):
    """Final scoring: high-shot tomography, physical reconstruction,
    phase-optimized Bell fidelity."""
    model = ReadoutModel(readout.centroids, readout.sigma_v, shots)

    def evaluate(params) -> float:
        eps1, eps2, len1, len2 = (float(v) for v in params)
        result = bell_protocol(link, eps1, eps2, len1, len2)
        settings = measure_state(result.state, model, confusion, seed)
        try:
            rho = mle_reconstruct(settings)
        except Exception as exc:
            logger.warning("final reconstruction fell back to its best iterate: %s", exc)
            rho = getattr(exc, "rho", None)
            if rho is None:
                raise
        return bell_fidelity(rho)

    return evaluate
