"""Desk-scale simulator of deterministic photon exchange between two
superconducting-qubit modules connected by a multimode cable link."""

from ._kernels import BACKEND as kernel_backend
from .lindblad import (
    CollapseChannel,
    IntegrationError,
    TimeDependentHamiltonian,
    Trajectory,
    channels_from_coherence,
    evolve,
    loss_channel,
)
from .model import (
    DcOffsetMap,
    DeviceParams,
    FluxPulse,
    InterconnectParams,
    NormalModeDecomposition,
    PhotonLink,
    build_exchange_hamiltonian,
    build_lab_frame_hamiltonian,
    build_transfer_hamiltonian,
    dc_offset_resonance,
    diagonalize_interconnect,
    eps_for_rate,
    sideband_rate,
)
from .protocols import (
    BellResult,
    ChevronResult,
    DelayScanResult,
    StirapResult,
    StirapScanResult,
    TransferResult,
    bell_protocol,
    chevron_scan,
    delay_scan,
    estimate_symmetry_center,
    mode_coherence_probe,
    stirap_scan,
    stirap_transfer,
    transfer,
)
from .qops import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    annihilation,
    basis_state,
    embed,
    expect,
    identity,
    number,
    partial_trace,
    random_density_matrix,
    state_fidelity,
)

__version__ = "0.1.0"
