"""Physical model of two transmon modules linked by a multimode coaxial cable.

Each module couples its qubit to an on-chip communication resonator; both
resonators couple with equal strength to one cable mode.  Hybridization yields
three normal modes: a dark "communication" mode with no cable weight (the
low-loss photon channel) and two lossy bright modes.  Flux-modulating a qubit
at its detuning from a normal mode activates a first-sideband exchange whose
rate carries the Bessel factor J1(eps / (2 omega)).

All frequencies are plain Hz here; matrices handed to the solver are built in
angular units (every Hamiltonian term is multiplied by 2*pi exactly once, in
this module).  ``eps`` is the peak-to-peak qubit-frequency excursion of the
flux modulation: the instantaneous qubit frequency in the lab frame is
nu_q + (eps/2) * cos(2 pi omega t), which is what makes the J1(eps/(2 omega))
sideband weight exact.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import j1 as bessel_j1

from .lindblad import CollapseChannel, TimeDependentHamiltonian, channels_from_coherence, loss_channel
from .qops import HilbertSpace, Operator, annihilation, embed, number

__all__ = [
    "DeviceParams",
    "InterconnectParams",
    "NormalModeDecomposition",
    "FluxPulse",
    "DcOffsetMap",
    "PhotonLink",
    "diagonalize_interconnect",
    "sideband_rate",
    "eps_for_rate",
    "build_exchange_hamiltonian",
    "build_transfer_hamiltonian",
    "build_lab_frame_hamiltonian",
    "dc_offset_resonance",
]

TWO_PI = 2.0 * np.pi

# first maximum of J1: beyond eps/(2 omega) = 1.8412 the sideband rate decreases
_J1_PEAK_X = 1.8411837813406593


@dataclass(frozen=True)
class DeviceParams:
    """Per-module parameters.

    Frequencies in Hz, times in s.  ``alpha`` is the anharmonicity magnitude
    (the e-f transition sits below g-e by alpha).  ``nu_m`` lists memory-mode
    frequencies; they are spectators (no coupling is modeled) used only to
    annotate chevron scans.
    """

    nu_q: float
    alpha: float
    nu_r: float
    nu_c: float
    g_qc: float
    T1: float
    T2: float
    nu_m: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nu_m", tuple(float(f) for f in self.nu_m))
        for name in ("nu_q", "alpha", "nu_r", "nu_c", "g_qc"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if any(f <= 0 for f in self.nu_m):
            raise ValueError("memory-mode frequencies must be positive")
        if self.T1 <= 0 or self.T2 <= 0:
            raise ValueError("T1 and T2 must be positive")
        if self.T2 > 2.0 * self.T1 * (1.0 + 1e-12):
            raise ValueError(f"T2={self.T2} exceeds 2*T1={2 * self.T1}")


@dataclass(frozen=True)
class InterconnectParams:
    """Shared communication-resonator frequency, cable detuning delta = nu_l - nu_c,
    resonator-cable coupling g_l, and normal-mode decay rates (1/s)."""

    nu_c: float
    delta: float
    g_l: float
    kappa_bright: float
    kappa_dark: float

    def __post_init__(self):
        if self.nu_c <= 0:
            raise ValueError("nu_c must be positive")
        if self.g_l <= 0:
            raise ValueError("g_l must be positive")
        if self.kappa_bright < 0 or self.kappa_dark < 0:
            raise ValueError("decay rates must be >= 0")

    @property
    def nu_l(self) -> float:
        """Bare cable-mode frequency."""
        return self.nu_c + self.delta


@dataclass(frozen=True)
class NormalModeDecomposition:
    """Eigenstructure of the hybridized (resonator 1, resonator 2, cable) block.

    ``frequencies`` are ascending (Hz); column j of ``eigenvectors`` is mode j
    over the basis (resonator 1, resonator 2, cable); ``couplings[i, j]`` is
    qubit i's renormalized coupling g_qc_i times its resonator's amplitude in
    mode j (Hz, signed).  ``dark_index`` marks the mode with (near-)zero cable
    weight.
    """

    frequencies: np.ndarray
    eigenvectors: np.ndarray
    couplings: np.ndarray
    dark_index: int

    def __post_init__(self):
        freq = np.asarray(self.frequencies, dtype=float)
        vec = np.asarray(self.eigenvectors, dtype=float)
        cpl = np.asarray(self.couplings, dtype=float)
        if freq.shape != (3,) or vec.shape != (3, 3):
            raise ValueError("expected 3 normal modes")
        if np.max(np.abs(vec.T @ vec - np.eye(3))) > 1e-9:
            raise ValueError("eigenvector matrix is not orthonormal within 1e-9")
        if cpl.ndim != 2 or cpl.shape[1] != 3:
            raise ValueError("couplings must have shape (n_qubits, 3)")
        if not 0 <= self.dark_index < 3:
            raise ValueError("dark_index out of range")
        for arr in (freq, vec, cpl):
            arr.flags.writeable = False
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "eigenvectors", vec)
        object.__setattr__(self, "couplings", cpl)

    @property
    def dark_frequency(self) -> float:
        return float(self.frequencies[self.dark_index])

    @property
    def bright_indices(self) -> tuple[int, int]:
        """Indices of the two bright modes, ascending in frequency."""
        return tuple(j for j in range(3) if j != self.dark_index)  # type: ignore[return-value]


def diagonalize_interconnect(p: InterconnectParams, g_qc) -> NormalModeDecomposition:
    """Diagonalize the single-excitation coupling matrix of the link.

    The 3x3 block over (resonator 1, resonator 2, cable) is
    nu_c * I + [[0, 0, g_l], [0, 0, g_l], [g_l, g_l, delta]].  The dark mode
    is the eigenvector with minimal cable amplitude; for degenerate resonators
    it is exactly (1, -1, 0)/sqrt(2) at frequency nu_c.

    Parameters
    ----------
    p : InterconnectParams
    g_qc : sequence of float
        Qubit-resonator coupling per qubit (Hz); couplings to each normal mode
        come out as g_qc_i times the resonator amplitude.
    """
    g_qc = np.atleast_1d(np.asarray(g_qc, dtype=float))
    m = np.array(
        [
            [0.0, 0.0, p.g_l],
            [0.0, 0.0, p.g_l],
            [p.g_l, p.g_l, p.delta],
        ]
    )
    evals, evecs = np.linalg.eigh(m)
    order = np.argsort(evals)
    evals = evals[order]
    evecs = evecs[:, order]
    # fix arbitrary eigh signs: make each mode's largest component positive
    for j in range(3):
        k = int(np.argmax(np.abs(evecs[:, j])))
        if evecs[k, j] < 0:
            evecs[:, j] = -evecs[:, j]
    dark = int(np.argmin(np.abs(evecs[2, :])))
    couplings = g_qc[:, None] * evecs[:2, :][: g_qc.size, :]
    return NormalModeDecomposition(
        frequencies=p.nu_c + evals,
        eigenvectors=evecs,
        couplings=couplings,
        dark_index=dark,
    )


def sideband_rate(g_tilde: float, eps: float, omega: float) -> float:
    """Effective first-sideband exchange rate g_tilde * J1(eps / (2 omega)), Hz."""
    if omega <= 0:
        raise ValueError(f"modulation frequency must be positive, got {omega}")
    return float(g_tilde * bessel_j1(eps / (2.0 * omega)))


def eps_for_rate(g_tilde: float, omega: float, rate: float) -> float:
    """Invert :func:`sideband_rate` on the rising branch of J1.

    Returns the modulation amplitude eps (Hz) with
    sideband_rate(g_tilde, eps, omega) == rate, restricted to
    eps/(2 omega) <= 1.8412 (the first J1 maximum).
    """
    if omega <= 0 or g_tilde <= 0:
        raise ValueError("omega and g_tilde must be positive")
    max_rate = g_tilde * bessel_j1(_J1_PEAK_X)
    if not 0 <= rate <= max_rate:
        raise ValueError(f"rate {rate} outside attainable [0, {max_rate:.4g}]")
    if rate == 0:
        return 0.0
    x = brentq(lambda x: bessel_j1(x) - rate / g_tilde, 0.0, _J1_PEAK_X, xtol=1e-15)
    return float(x * 2.0 * omega)


@dataclass(frozen=True)
class FluxPulse:
    """Time envelope of one qubit's parametric flux modulation.

    ``eps`` (Hz) is the peak-to-peak qubit-frequency excursion, ``omega`` (Hz)
    the modulation frequency.  Square pulses run over [start, start+duration);
    Gaussian pulses are A exp(-(t-center)^2 / (2 sigma^2)) truncated to exactly
    zero beyond +-5 sigma (duration = 10 sigma).
    """

    shape: str
    eps: float
    omega: float
    start: float
    duration: float
    sigma: float | None = None
    center: float | None = None

    def __post_init__(self):
        if self.shape not in ("square", "gaussian"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.shape == "gaussian":
            if self.sigma is None or self.sigma <= 0 or self.center is None:
                raise ValueError("gaussian pulse needs sigma > 0 and a center")

    @classmethod
    def square(cls, eps: float, omega: float, start: float, duration: float) -> "FluxPulse":
        return cls("square", eps, omega, start, duration)

    @classmethod
    def gaussian(cls, eps: float, omega: float, sigma: float, center: float) -> "FluxPulse":
        return cls(
            "gaussian",
            eps,
            omega,
            start=center - 5.0 * sigma,
            duration=10.0 * sigma,
            sigma=sigma,
            center=center,
        )

    @property
    def end(self) -> float:
        return self.start + self.duration

    def envelope(self, t: float) -> float:
        """Instantaneous eps(t)."""
        if self.shape == "square":
            return self.eps if self.start <= t < self.end else 0.0
        dt = t - self.center
        if abs(dt) > 5.0 * self.sigma:
            return 0.0
        return self.eps * math.exp(-(dt * dt) / (2.0 * self.sigma**2))

    def breakpoints(self) -> tuple[float, float]:
        return (self.start, self.end)


@dataclass(frozen=True)
class DcOffsetMap:
    """Calibration of the resonant modulation frequency against amplitude.

    Flux modulation shifts the mean qubit frequency (DC offset), so the
    resonant sideband frequency depends on eps.  The map stores calibration
    points (eps, resonant omega) and interpolates linearly; it refuses to
    extrapolate outside the calibrated range.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(e), float(f)) for e, f in self.points)
        if len(pts) < 2:
            raise ValueError("need at least two calibration points")
        eps = [e for e, _ in pts]
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError("calibration points must be sorted with distinct eps")
        object.__setattr__(self, "points", pts)

    @classmethod
    def flat(cls, omega: float, eps_max: float) -> "DcOffsetMap":
        """Amplitude-independent resonance (no DC-offset nonlinearity)."""
        return cls(((0.0, omega), (eps_max, omega)))

    @property
    def eps_range(self) -> tuple[float, float]:
        return (self.points[0][0], self.points[-1][0])

    def resonance(self, eps: float) -> float:
        lo, hi = self.eps_range
        if not lo <= eps <= hi:
            raise ValueError(
                f"eps={eps:.4g} Hz outside calibrated range [{lo:.4g}, {hi:.4g}]; "
                "refusing to extrapolate"
            )
        xs = np.array([e for e, _ in self.points])
        ys = np.array([f for _, f in self.points])
        return float(np.interp(eps, xs, ys))


def dc_offset_resonance(dc_map: DcOffsetMap, eps: float) -> float:
    """Resonant modulation frequency (Hz) at amplitude eps, by interpolation."""
    return dc_map.resonance(eps)


def _exchange_block(space: HilbertSpace, qubit_label: str, mode_label: str) -> np.ndarray:
    """Matrix of -i (b sigma+ - b^dag sigma-) on ``space`` (Hermitian)."""
    qi = space.index(qubit_label)
    mi = space.index(mode_label)
    sm = embed(annihilation(space.dims[qi]), space, qi).matrix
    b = embed(annihilation(space.dims[mi]), space, mi).matrix
    return -1j * (b @ sm.conj().T - b.conj().T @ sm)


def build_exchange_hamiltonian(
    devices,
    mode_freqs,
    couplings,
    pulses,
    nu_ref: float,
    *,
    mode_labels: tuple[str, ...] | None = None,
    mode_levels: int = 2,
) -> TimeDependentHamiltonian:
    """Rotating-frame exchange Hamiltonian for qubits sideband-coupled to modes.

    The frame puts every mode at ``nu_ref`` and each pulsed qubit at
    ``nu_ref - omega_i``; dropping fast terms leaves, in rad/s,

        H(t) = sum_j 2 pi (nu_j - nu_ref) n_j
             + sum_i 2 pi (nu_qi + omega_i - nu_ref) n_qi
             + sum_ij 2 pi g_ij J1(eps_i(t) / (2 omega_i)) * K_ij

    with K_ij = -i (b_j sigma_i+ - b_j^dag sigma_i-).  Qubits are two-level.

    Parameters
    ----------
    devices : sequence of DeviceParams
    mode_freqs : sequence of float
        Mode frequencies (Hz).
    couplings : array (n_qubits, n_modes)
        Renormalized couplings g_ij (Hz, signed).
    pulses : sequence of FluxPulse or None
        One entry per qubit; None means the qubit is never driven.
    nu_ref : float
        Frame reference frequency (Hz), normally the dark-mode frequency.
    """
    devices = tuple(devices)
    mode_freqs = tuple(float(f) for f in mode_freqs)
    couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
    pulses = tuple(pulses)
    n_q, n_m = len(devices), len(mode_freqs)
    if couplings.shape != (n_q, n_m):
        raise ValueError(f"couplings shape {couplings.shape} != {(n_q, n_m)}")
    if len(pulses) != n_q:
        raise ValueError("need one pulse entry (or None) per qubit")

    q_labels = tuple(f"q{i + 1}" for i in range(n_q))
    m_labels = mode_labels or tuple(f"m{j + 1}" for j in range(n_m))
    if len(m_labels) != n_m:
        raise ValueError("need one mode label per mode")
    space = HilbertSpace((2,) * n_q + (mode_levels,) * n_m, q_labels + m_labels)

    static = np.zeros((space.dim, space.dim), dtype=complex)
    for j, nu_j in enumerate(mode_freqs):
        det = nu_j - nu_ref
        if det != 0.0:
            static += TWO_PI * det * embed(number(mode_levels), space, m_labels[j]).matrix
    for i, dev in enumerate(devices):
        if pulses[i] is None:
            # an undriven qubit never exchanges excitations; keep it in its
            # own rotating frame (zero detuning term) instead of dragging a
            # multi-GHz phase term through the integrator
            continue
        det = dev.nu_q + pulses[i].omega - nu_ref
        if det != 0.0:
            static += TWO_PI * det * embed(number(2), space, q_labels[i]).matrix

    terms = []
    breakpoints: list[float] = []
    for i, pulse in enumerate(pulses):
        if pulse is None or pulse.eps == 0.0:
            continue
        block = np.zeros((space.dim, space.dim), dtype=complex)
        for j in range(n_m):
            if couplings[i, j] != 0.0:
                block += TWO_PI * couplings[i, j] * _exchange_block(space, q_labels[i], m_labels[j])
        two_omega = 2.0 * pulse.omega

        if pulse.shape == "square":
            # constant Bessel weight inside the window
            j1_flat = float(bessel_j1(pulse.eps / two_omega))
            t_on, t_off = pulse.start, pulse.end

            def coeff(t, _j1=j1_flat, _a=t_on, _b=t_off):
                return _j1 if _a <= t < _b else 0.0

        else:

            def coeff(t, _pulse=pulse, _two_omega=two_omega):
                e = _pulse.envelope(t)
                return float(bessel_j1(e / _two_omega)) if e else 0.0

        terms.append((coeff, block))
        breakpoints.extend(pulse.breakpoints())

    return TimeDependentHamiltonian(space, static, tuple(terms), tuple(breakpoints))


def build_transfer_hamiltonian(
    devices,
    modes: NormalModeDecomposition,
    pulses,
    *,
    include_bright: bool = True,
    qubits: tuple[int, ...] = (0, 1),
    mode_levels: int = 2,
) -> TimeDependentHamiltonian:
    """Transfer Hamiltonian on (qubit 1, qubit 2, dark, bright 1, bright 2).

    The rotating frame is referenced to the dark-mode frequency: bright modes
    carry their detunings (nu_j - nu_c), each driven qubit carries
    (nu_q + omega - nu_c), and every qubit-mode pair gets the antisymmetric
    exchange term weighted by J1(eps(t) / (2 omega)).

    ``qubits`` selects which qubits are present (protocols probing a single
    qubit halve the Hilbert-space dimension); ``include_bright=False`` keeps
    only the dark mode.
    """
    devices = tuple(devices)
    pulses = tuple(pulses)
    if len(pulses) != len(devices):
        raise ValueError("need one pulse entry (or None) per device")
    if any(not 0 <= q < len(devices) for q in qubits) or len(set(qubits)) != len(qubits):
        raise ValueError(f"bad qubit selection {qubits}")

    dark = modes.dark_index
    bright_lo, bright_hi = modes.bright_indices
    mode_idx = (dark, bright_lo, bright_hi) if include_bright else (dark,)
    labels = ("dark", "bright1", "bright2") if include_bright else ("dark",)
    nu_ref = modes.dark_frequency

    sel_devices = tuple(devices[q] for q in qubits)
    sel_pulses = tuple(pulses[q] for q in qubits)
    freqs = tuple(float(modes.frequencies[j]) for j in mode_idx)
    cpl = modes.couplings[np.array(qubits)][:, np.array(mode_idx)]
    return build_exchange_hamiltonian(
        sel_devices, freqs, cpl, sel_pulses, nu_ref,
        mode_labels=labels, mode_levels=mode_levels,
    )


def build_lab_frame_hamiltonian(
    devices,
    interconnect: InterconnectParams | None,
    pulses,
    *,
    qubit_levels: int = 3,
    mode_levels: int = 2,
) -> TimeDependentHamiltonian:
    """Full un-rotated Hamiltonian with counter-rotating coupling terms.

    Subsystems: one transmon per device (``qubit_levels`` each, >= 3 to
    represent the anharmonicity term), one communication resonator per device,
    and, when ``interconnect`` is given, the shared cable mode.  Couplings
    are (a + a^dag)(b + b^dag); the flux drive modulates the qubit frequency
    as nu_q + (eps/2) cos(2 pi omega t).

    Used for cross-validating the rotating-wave treatment at reduced
    detunings, so system sizes stay small.
    """
    devices = tuple(devices)
    pulses = tuple(pulses)
    if len(pulses) != len(devices):
        raise ValueError("need one pulse entry (or None) per device")
    if qubit_levels < 2:
        raise ValueError("qubit truncation must be >= 2")
    n_q = len(devices)

    q_labels = tuple(f"q{i + 1}" for i in range(n_q))
    r_labels = tuple(f"r{i + 1}" for i in range(n_q))
    dims: tuple[int, ...] = (qubit_levels,) * n_q + (mode_levels,) * n_q
    labels = q_labels + r_labels
    if interconnect is not None:
        dims = dims + (mode_levels,)
        labels = labels + ("cable",)
    space = HilbertSpace(dims, labels)

    static = np.zeros((space.dim, space.dim), dtype=complex)
    for i, dev in enumerate(devices):
        nq = embed(number(qubit_levels), space, q_labels[i]).matrix
        static += TWO_PI * dev.nu_q * nq
        # transmon ladder: e-f transition sits alpha below g-e
        static -= TWO_PI * (dev.alpha / 2.0) * (nq @ nq - nq)
        static += TWO_PI * dev.nu_c * embed(number(mode_levels), space, r_labels[i]).matrix
        aq = embed(annihilation(qubit_levels), space, q_labels[i]).matrix
        br = embed(annihilation(mode_levels), space, r_labels[i]).matrix
        xq = aq + aq.conj().T
        xr = br + br.conj().T
        static += TWO_PI * dev.g_qc * (xq @ xr)
    if interconnect is not None:
        static += TWO_PI * interconnect.nu_l * embed(number(mode_levels), space, "cable").matrix
        bc = embed(annihilation(mode_levels), space, "cable").matrix
        xc = bc + bc.conj().T
        for i in range(n_q):
            br = embed(annihilation(mode_levels), space, r_labels[i]).matrix
            static += TWO_PI * interconnect.g_l * ((br + br.conj().T) @ xc)

    terms = []
    breakpoints: list[float] = []
    for i, pulse in enumerate(pulses):
        if pulse is None or pulse.eps == 0.0:
            continue
        nq = embed(number(qubit_levels), space, q_labels[i]).matrix * TWO_PI

        def coeff(t, _pulse=pulse):
            e = _pulse.envelope(t)
            return 0.5 * e * math.cos(TWO_PI * _pulse.omega * t) if e else 0.0

        terms.append((coeff, nq))
        breakpoints.extend(pulse.breakpoints())

    return TimeDependentHamiltonian(space, static, tuple(terms), tuple(breakpoints))


@dataclass(frozen=True)
class PhotonLink:
    """Assembled two-module link: parameters, normal modes, and calibration.

    ``eps_max`` is the per-qubit modulation amplitude realizing the target
    effective dark-mode coupling (2 MHz by default); ``dc_maps`` return each
    qubit's resonant modulation frequency as a function of eps (flat unless a
    calibration is supplied).  ``drive_coherence`` optionally overrides
    (T1, T2) per qubit while its sideband drive is on.
    """

    devices: tuple[DeviceParams, DeviceParams]
    interconnect: InterconnectParams
    modes: NormalModeDecomposition
    dc_maps: tuple[DcOffsetMap, DcOffsetMap]
    eps_max: tuple[float, float]
    drive_coherence: tuple[tuple[float, float] | None, tuple[float, float] | None] = (None, None)
    mode_levels: int = 2
    rtol: float = 1e-8
    atol: float = 1e-10
    scan_rtol: float = 1e-7
    scan_atol: float = 1e-9

    @classmethod
    def assemble(
        cls,
        devices,
        interconnect: InterconnectParams,
        *,
        g_eff_target: float = 2.0e6,
        dc_maps: tuple[DcOffsetMap, DcOffsetMap] | None = None,
        drive_coherence=(None, None),
        mode_levels: int = 2,
        rtol: float = 1e-8,
        atol: float = 1e-10,
        scan_rtol: float = 1e-7,
        scan_atol: float = 1e-9,
    ) -> "PhotonLink":
        """Diagonalize the interconnect and calibrate default pulse amplitudes.

        For each qubit, eps_max solves g_dark * J1(eps/(2 omega_res)) =
        g_eff_target at the (flat-map) dark resonance omega_res = nu_c - nu_q.
        """
        devices = tuple(devices)
        if len(devices) != 2:
            raise ValueError("PhotonLink needs exactly two devices")
        modes = diagonalize_interconnect(interconnect, [d.g_qc for d in devices])
        eps_max = []
        maps = []
        for i, dev in enumerate(devices):
            omega_res = modes.dark_frequency - dev.nu_q
            if omega_res <= 0:
                raise ValueError("qubit must sit below the communication mode")
            g_dark = abs(float(modes.couplings[i, modes.dark_index]))
            eps_i = eps_for_rate(g_dark, omega_res, g_eff_target)
            eps_max.append(eps_i)
            maps.append(DcOffsetMap.flat(omega_res, 1.5 * eps_i))
        if dc_maps is not None:
            maps = list(dc_maps)
        return cls(
            devices=devices,
            interconnect=interconnect,
            modes=modes,
            dc_maps=(maps[0], maps[1]),
            eps_max=(eps_max[0], eps_max[1]),
            drive_coherence=tuple(drive_coherence),
            mode_levels=mode_levels,
            rtol=rtol,
            atol=atol,
            scan_rtol=scan_rtol,
            scan_atol=scan_atol,
        )

    # -- calibration helpers ------------------------------------------------

    def dark_resonance(self, qubit: int) -> float:
        """Resonant modulation frequency for the dark mode, zero-amplitude limit."""
        return self.modes.dark_frequency - self.devices[qubit].nu_q

    def g_dark(self, qubit: int) -> float:
        return abs(float(self.modes.couplings[qubit, self.modes.dark_index]))

    def g_eff(self, qubit: int, eps: float) -> float:
        """Effective dark-mode exchange rate at amplitude eps (Hz)."""
        return abs(sideband_rate(self.g_dark(qubit), eps, self.dc_maps[qubit].resonance(eps)))

    def square_pulse(self, qubit: int, eps: float, start: float, duration: float) -> FluxPulse:
        """Square sideband pulse at the dark resonance for this amplitude."""
        return FluxPulse.square(eps, self.dc_maps[qubit].resonance(eps), start, duration)

    def gaussian_pulse(self, qubit: int, eps: float, sigma: float, center: float) -> FluxPulse:
        return FluxPulse.gaussian(eps, self.dc_maps[qubit].resonance(eps), sigma, center)

    def qubit_coherence(self, qubit: int, *, during_drive: bool = True) -> tuple[float, float]:
        if during_drive and self.drive_coherence[qubit] is not None:
            return self.drive_coherence[qubit]
        dev = self.devices[qubit]
        return (dev.T1, dev.T2)

    def with_qubit_coherence(self, T1: float, T2: float) -> "PhotonLink":
        """Copy of the link with both qubits' T1/T2 replaced (drive overrides cleared)."""
        devices = tuple(dataclasses.replace(d, T1=T1, T2=T2) for d in self.devices)
        return dataclasses.replace(
            self, devices=devices, drive_coherence=(None, None)
        )

    # -- solver inputs ------------------------------------------------------

    def hamiltonian(
        self, pulses, *, qubits: tuple[int, ...] = (0, 1), include_bright: bool = True
    ) -> TimeDependentHamiltonian:
        return build_transfer_hamiltonian(
            self.devices,
            self.modes,
            pulses,
            include_bright=include_bright,
            qubits=qubits,
            mode_levels=self.mode_levels,
        )

    def channels(
        self,
        space: HilbertSpace,
        *,
        qubits: tuple[int, ...] = (0, 1),
        include_loss: bool = True,
        include_dephasing: bool = True,
        during_drive: bool = True,
    ) -> list[CollapseChannel]:
        """Collapse channels for a space built by :meth:`hamiltonian`.

        Qubit relaxation and mode photon loss count as loss; qubit pure
        dephasing counts as dephasing.  Disabling a class drops those terms
        from the master equation while keeping every other rate unchanged.
        """
        out: list[CollapseChannel] = []
        for pos, q in enumerate(qubits):
            label = f"q{pos + 1}"
            if label not in space.labels:
                raise ValueError(f"space has no subsystem {label!r}")
            t1, t2 = self.qubit_coherence(q, during_drive=during_drive)
            relax, dephase = channels_from_coherence(t1, t2, space, label, label=label)
            if include_loss:
                out.append(relax)
            if include_dephasing:
                out.append(dephase)
        if include_loss:
            if "dark" in space.labels:
                out.append(loss_channel(space, "dark", self.interconnect.kappa_dark))
            for label in ("bright1", "bright2"):
                if label in space.labels:
                    out.append(loss_channel(space, label, self.interconnect.kappa_bright))
        return out
