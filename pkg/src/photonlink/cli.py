"""Command-line interface for the link simulator.

Every subcommand reads an INI config (defaults built in, path from --config
or the PHOTONLINK_CONFIG environment variable), runs one protocol, and writes
plot-ready CSV data plus a metadata JSON and an echo of the fully resolved
config into the output directory. Frequencies and couplings are MHz and
times are ns on every CLI surface.

Exit codes: 0 success, 2 configuration or usage error, 3 solver or sweep
failure. Failed sweeps flush the completed cells and a manifest naming them.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import MHZ, NS, ConfigError, RunConfig, load_config
from .gpopt import (
    ParameterBox,
    make_bell_evaluator,
    make_bell_experiment,
    optimize_bell,
)
from .lindblad import IntegrationError
from .protocols import (
    SweepError,
    bell_protocol,
    chevron_scan,
    delay_scan,
    mode_coherence_probe,
    stirap_scan,
    transfer,
)
from .tomography import (
    MleConvergenceError,
    ReadoutModel,
    analytic_confusion,
    bell_fidelity,
    measure_state,
    mle_reconstruct,
    pauli_expectations,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


# ---------------------------------------------------------------------------
# small helpers


def _parse_axis(spec: str, name: str) -> np.ndarray:
    """Grid axis from 'start:stop:n', a comma list, or a single number."""
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError("expected start:stop:n")
            start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise ValueError("axis needs at least one point")
            return np.linspace(start, stop, n)
        if "," in spec:
            values = np.array([float(v) for v in spec.split(",") if v.strip()])
            if values.size == 0:
                raise ValueError("axis is empty")
            return values
        return np.array([float(spec)])
    except ValueError as exc:
        raise ConfigError(f"invalid {name} axis {spec!r}: {exc}") from None


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_outputs(outdir: Path, command: str, cfg: RunConfig, started: float,
                   extra: dict, files: list[str]) -> None:
    (outdir / "config_echo.ini").write_text(cfg.echo_ini())
    meta = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "wall_time_s": time.monotonic() - started,
        "resolved_config": cfg.raw,
        "outputs": sorted(files + ["config_echo.ini"]),
    }
    meta.update(extra)
    (outdir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _flush_partial(outdir: Path, header: list[str], rows_by_cell: dict,
                   n_jobs: int, error: str) -> None:
    """Write whatever sweep cells finished, plus a manifest naming them."""
    completed = sorted(rows_by_cell)
    rows = [row for idx in completed for row in rows_by_cell[idx]]
    _write_csv(outdir / "partial.csv", header, rows)
    manifest = {
        "completed_cells": completed,
        "n_cells": n_jobs,
        "error": error,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _qubit_index(value: int) -> int:
    if value not in (1, 2):
        raise ConfigError("qubit/sender must be 1 or 2")
    return value - 1


# ---------------------------------------------------------------------------
# subcommands


def _cmd_modes(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    modes = link.modes
    names = {modes.dark_index: "dark"}
    names[modes.bright_indices[0]] = "bright1"
    names[modes.bright_indices[1]] = "bright2"
    rows = []
    for j in sorted(range(3), key=lambda j: modes.frequencies[j]):
        det = (modes.frequencies[j] - cfg.interconnect.nu_c) / MHZ
        rows.append(
            (
                names[j],
                modes.frequencies[j] / MHZ,
                det,
                modes.couplings[0, j] / MHZ,
                modes.couplings[1, j] / MHZ,
            )
        )
        print(f"{names[j]:8s} detuning {det:+.6f} MHz")
    dark = modes.dark_index
    print(
        "dark couplings "
        f"g_q1 = {modes.couplings[0, dark] / MHZ:.6f} MHz, "
        f"g_q2 = {modes.couplings[1, dark] / MHZ:.6f} MHz"
    )
    _write_csv(
        outdir / "modes.csv",
        ["mode", "frequency_mhz", "detuning_mhz", "g_q1_mhz", "g_q2_mhz"],
        rows,
    )
    _write_outputs(outdir, "modes", cfg, started, {}, ["modes.csv"])
    return EXIT_OK


def _cmd_chevron(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    qubit = _qubit_index(args.qubit)
    center = link.dark_resonance(qubit) / MHZ
    fmin = args.fmin_mhz if args.fmin_mhz is not None else center - 15.0
    fmax = args.fmax_mhz if args.fmax_mhz is not None else center + 15.0
    eps = (args.eps_mhz * MHZ) if args.eps_mhz is not None else link.eps_max[qubit]
    if args.n_freq < 2 or args.n_len < 2:
        raise ConfigError("chevron needs at least 2 frequencies and 2 lengths")
    header = ["frequency_mhz", "length_ns", "population"]
    try:
        result = chevron_scan(
            link,
            qubit,
            (fmin * MHZ, fmax * MHZ),
            args.max_len_ns * NS,
            eps,
            n_frequencies=args.n_freq,
            n_lengths=args.n_len,
            dissipative=not args.lossless,
            workers=cfg.workers,
        )
    except SweepError as exc:
        lengths = np.linspace(0.0, args.max_len_ns, args.n_len)
        freqs = np.linspace(fmin, fmax, args.n_freq)
        rows_by_cell = {
            i: [
                (freqs[i], lengths[k], float(col[k]))
                for k in range(len(lengths))
            ]
            for i, col in exc.completed.items()
        }
        _flush_partial(outdir, header, rows_by_cell, exc.n_jobs, str(exc))
        raise
    rows = [
        (f / MHZ, t / NS, float(result.population[i, k]))
        for i, f in enumerate(result.frequencies)
        for k, t in enumerate(result.lengths)
    ]
    _write_csv(outdir / "chevron.csv", header, rows)
    _write_outputs(outdir, "chevron", cfg, started, {
        "qubit": args.qubit,
        "eps_mhz": eps / MHZ,
    }, ["chevron.csv"])
    return EXIT_OK


def _cmd_transfer(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    sender = _qubit_index(args.sender)
    result = transfer(
        link,
        sender,
        eps1=None if args.eps1_mhz is None else args.eps1_mhz * MHZ,
        eps2=None if args.eps2_mhz is None else args.eps2_mhz * MHZ,
        t1_len=args.t1_len_ns * NS,
        t2_len=args.t2_len_ns * NS,
        delay=args.delay_ns * NS,
        include_loss=not args.no_loss,
        include_dephasing=not args.no_dephasing,
    )
    rows = [
        (t / NS, float(a), float(b), float(c))
        for t, a, b, c in zip(result.times, result.P_eg, result.P_ge, result.P_gg)
    ]
    _write_csv(outdir / "transfer.csv", ["time_ns", "p_eg", "p_ge", "p_gg"], rows)
    print(
        f"peak transfer probability {result.peak_fidelity:.4f} "
        f"at {result.peak_time / NS:.1f} ns"
    )
    _write_outputs(outdir, "transfer", cfg, started, {
        "sender": args.sender,
        "peak_fidelity": result.peak_fidelity,
        "peak_time_ns": result.peak_time / NS,
    }, ["transfer.csv"])
    return EXIT_OK


def _cmd_delay_cal(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    sender = _qubit_index(args.sender)
    delays = _parse_axis(args.delays_ns, "delays") * NS
    lengths = _parse_axis(args.lengths_ns, "lengths") * NS
    header = ["delay_ns", "length_ns", "sender_population"]
    try:
        result = delay_scan(
            link,
            sender,
            delays,
            lengths,
            skew=(args.skew1_ns * NS, args.skew2_ns * NS),
            workers=cfg.workers,
        )
    except SweepError as exc:
        rows_by_cell = {
            idx: [(delays[idx // len(lengths)] / NS, lengths[idx % len(lengths)] / NS,
                   float(v))]
            for idx, v in exc.completed.items()
        }
        _flush_partial(outdir, header, rows_by_cell, exc.n_jobs, str(exc))
        raise
    rows = [
        (d / NS, ln / NS, float(result.population[i, k]))
        for i, d in enumerate(result.delays)
        for k, ln in enumerate(result.lengths)
    ]
    _write_csv(outdir / "delay_scan.csv", header, rows)
    print(f"symmetry center {result.symmetry_center / NS:+.1f} ns")
    _write_outputs(outdir, "delay-cal", cfg, started, {
        "sender": args.sender,
        "symmetry_center_ns": result.symmetry_center / NS,
    }, ["delay_scan.csv"])
    return EXIT_OK


def _cmd_stirap(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    if args.qubit_t1_us is not None or args.qubit_t2_us is not None:
        if args.qubit_t1_us is None or args.qubit_t2_us is None:
            raise ConfigError("--qubit-t1-us and --qubit-t2-us must be given together")
        link = link.with_qubit_coherence(args.qubit_t1_us * 1e-6, args.qubit_t2_us * 1e-6)
    sigmas = _parse_axis(args.sigmas_ns, "sigmas") * NS
    delta_ts = _parse_axis(args.delta_ts_ns, "delta-ts") * NS
    amplitude = None if args.amplitude_mhz is None else args.amplitude_mhz * MHZ
    header = ["sigma_ns", "delta_t_ns", "fidelity"]
    try:
        result = stirap_scan(
            link,
            sigmas,
            delta_ts,
            amplitude=amplitude,
            sender=_qubit_index(args.sender),
            workers=cfg.workers,
        )
    except SweepError as exc:
        rows_by_cell = {
            idx: [(sigmas[idx // len(delta_ts)] / NS, delta_ts[idx % len(delta_ts)] / NS,
                   float(v[0]))]
            for idx, v in exc.completed.items()
        }
        _flush_partial(outdir, header, rows_by_cell, exc.n_jobs, str(exc))
        raise
    rows = [
        (s / NS, dt / NS, float(result.fidelity[i, k]))
        for i, s in enumerate(result.sigmas)
        for k, dt in enumerate(result.delta_ts)
    ]
    _write_csv(outdir / "stirap_map.csv", header, rows)
    print(
        f"max fidelity {result.max_fidelity:.4f} at "
        f"sigma = {result.argmax[0] / NS:.1f} ns, delta_t = {result.argmax[1] / NS:.1f} ns"
    )
    _write_outputs(outdir, "stirap", cfg, started, {
        "max_fidelity": result.max_fidelity,
        "argmax_sigma_ns": result.argmax[0] / NS,
        "argmax_delta_t_ns": result.argmax[1] / NS,
    }, ["stirap_map.csv"])
    return EXIT_OK


def _state_json(matrix: np.ndarray) -> dict:
    return {
        "real": np.real(matrix).tolist(),
        "imag": np.imag(matrix).tolist(),
        "basis": ["gg", "ge", "eg", "ee"],
    }


def _cmd_bell(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    result = bell_protocol(
        link,
        eps1=None if args.eps1_mhz is None else args.eps1_mhz * MHZ,
        eps2=None if args.eps2_mhz is None else args.eps2_mhz * MHZ,
        len1=args.len1_ns * NS,
        len2=args.len2_ns * NS,
        delay=args.delay_ns * NS,
        phase_correction=(
            None if args.phase_deg is None else np.deg2rad(args.phase_deg)
        ),
    )
    payload = _state_json(result.state.matrix)
    payload["fidelity"] = result.fidelity
    payload["phase_correction_rad"] = result.phase_correction
    payload["params"] = {
        "eps1_mhz": result.params["eps1"] / MHZ,
        "eps2_mhz": result.params["eps2"] / MHZ,
        "len1_ns": result.params["len1"] / NS,
        "len2_ns": result.params["len2"] / NS,
        "delay_ns": result.params["delay"] / NS,
    }
    (outdir / "bell_state.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(
        f"bell fidelity {result.fidelity:.4f} "
        f"(phase correction {result.phase_correction:+.4f} rad)"
    )
    _write_outputs(outdir, "bell", cfg, started, {
        "fidelity": result.fidelity,
    }, ["bell_state.json"])
    return EXIT_OK


def _cmd_tomo(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    result = bell_protocol(
        link, len1=args.len1_ns * NS, len2=args.len2_ns * NS
    )
    model = ReadoutModel.with_assignment_error(args.error_rate, shots=args.shots)
    confusion = analytic_confusion(model)
    settings = measure_state(result.state, model, confusion, cfg.seed)
    expectations = pauli_expectations(settings)
    reconstructed = mle_reconstruct(settings)
    fidelity = bell_fidelity(reconstructed)

    payload = _state_json(reconstructed.matrix)
    payload["bell_fidelity"] = fidelity
    (outdir / "tomo_state.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    rows = [
        (a, b, float(expectations[(a, b)]))
        for a in ("I", "X", "Y", "Z")
        for b in ("I", "X", "Y", "Z")
        if (a, b) != ("I", "I")
    ]
    _write_csv(outdir / "pauli_expectations.csv", ["pauli_q1", "pauli_q2", "value"], rows)
    print(f"reconstructed bell fidelity {fidelity:.4f} ({args.shots} shots/setting)")
    _write_outputs(outdir, "tomo", cfg, started, {
        "bell_fidelity": fidelity,
        "shots": args.shots,
        "readout_error_rate": args.error_rate,
        "simulated_fidelity": result.fidelity,
    }, ["tomo_state.json", "pauli_expectations.csv"])
    return EXIT_OK


def _cmd_optimize(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    model = ReadoutModel.with_assignment_error(args.error_rate, shots=args.shots)
    confusion = analytic_confusion(model)
    box = ParameterBox(
        np.array([
            args.eps_min_frac * link.eps_max[0],
            args.eps_min_frac * link.eps_max[1],
            args.len1_min_ns * NS,
            args.len2_min_ns * NS,
        ]),
        np.array([
            args.eps_max_frac * link.eps_max[0],
            args.eps_max_frac * link.eps_max[1],
            args.len1_max_ns * NS,
            args.len2_max_ns * NS,
        ]),
    )
    experiment = make_bell_experiment(link, model, confusion, shots=args.shots)
    evaluator = make_bell_evaluator(
        link, model, confusion, shots=args.final_shots, seed=cfg.seed
    )
    result = optimize_bell(
        experiment,
        box,
        args.iterations,
        cfg.seed,
        trace_path=outdir / "trace.jsonl",
        resume=args.resume,
        final_evaluator=evaluator,
        pool_size=args.pool_size,
    )
    best = {
        "eps1_mhz": float(result.best_params[0]) / MHZ,
        "eps2_mhz": float(result.best_params[1]) / MHZ,
        "len1_ns": float(result.best_params[2]) / NS,
        "len2_ns": float(result.best_params[3]) / NS,
        "best_objective": result.best_objective,
        "final_fidelity": result.final_fidelity,
        "iterations": len(result.records),
    }
    (outdir / "best.json").write_text(json.dumps(best, indent=2, sort_keys=True))
    print(
        f"best clipped objective {result.best_objective:.4f}; "
        f"final fidelity {result.final_fidelity:.4f} at "
        f"len1 = {best['len1_ns']:.1f} ns, len2 = {best['len2_ns']:.1f} ns"
    )
    _write_outputs(outdir, "optimize", cfg, started, {"best": best},
                   ["best.json", "trace.jsonl"])
    return EXIT_OK


def _cmd_coherence(cfg: RunConfig, args, outdir: Path, started: float) -> int:
    link = cfg.build_link()
    waits = None
    if args.waits_ns is not None:
        waits = _parse_axis(args.waits_ns, "waits") * NS
    fitted = mode_coherence_probe(
        link,
        args.kind,
        mode=args.mode,
        qubit=_qubit_index(args.qubit),
        mode_T2=None if args.mode_t2_ns is None else args.mode_t2_ns * NS,
        waits=waits,
    )
    _write_csv(
        outdir / "coherence.csv",
        ["kind", "mode", "fitted_ns"],
        [(args.kind, args.mode, fitted / NS)],
    )
    print(f"{args.mode} {args.kind} = {fitted / NS:.1f} ns")
    _write_outputs(outdir, "coherence", cfg, started, {
        "kind": args.kind,
        "mode": args.mode,
        "fitted_ns": fitted / NS,
    }, ["coherence.csv"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonlink",
        description="Simulated photonic-link experiments between two qubit modules.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config path (default: "
                       "$PHOTONLINK_CONFIG or built-in defaults)")
        p.add_argument("--out", help="output directory (default: results/<command>)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--workers", type=int, help="override run.workers")

    p = sub.add_parser("modes", help="normal-mode frequencies and couplings")
    common(p)
    p.set_defaults(func=_cmd_modes)

    p = sub.add_parser("chevron", help="population map vs modulation frequency and length")
    common(p)
    p.add_argument("--qubit", type=int, default=1)
    p.add_argument("--fmin-mhz", type=float, default=None)
    p.add_argument("--fmax-mhz", type=float, default=None)
    p.add_argument("--n-freq", type=int, default=41)
    p.add_argument("--max-len-ns", type=float, default=400.0)
    p.add_argument("--n-len", type=int, default=81)
    p.add_argument("--eps-mhz", type=float, default=None,
                   help="modulation amplitude (default: calibrated maximum)")
    p.add_argument("--lossless", action="store_true")
    p.set_defaults(func=_cmd_chevron)

    p = sub.add_parser("transfer", help="single-photon transfer traces")
    common(p)
    p.add_argument("--sender", type=int, default=1)
    p.add_argument("--eps1-mhz", type=float, default=None)
    p.add_argument("--eps2-mhz", type=float, default=None)
    p.add_argument("--t1-len-ns", type=float, default=400.0)
    p.add_argument("--t2-len-ns", type=float, default=400.0)
    p.add_argument("--delay-ns", type=float, default=0.0)
    p.add_argument("--no-loss", action="store_true",
                   help="disable photon loss channels (error budget)")
    p.add_argument("--no-dephasing", action="store_true",
                   help="disable qubit dephasing channels (error budget)")
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("delay-cal", help="pulse-delay calibration map")
    common(p)
    p.add_argument("--sender", type=int, default=1)
    p.add_argument("--delays-ns", default="-40:40:21")
    p.add_argument("--lengths-ns", default="40:240:11")
    p.add_argument("--skew1-ns", type=float, default=0.0)
    p.add_argument("--skew2-ns", type=float, default=0.0)
    p.set_defaults(func=_cmd_delay_cal)

    p = sub.add_parser("stirap", help="adiabatic-transfer fidelity map")
    common(p)
    p.add_argument("--sender", type=int, default=1)
    p.add_argument("--sigmas-ns", default="30:150:13")
    p.add_argument("--delta-ts-ns", default="0:120:9")
    p.add_argument("--amplitude-mhz", type=float, default=None)
    p.add_argument("--qubit-t1-us", type=float, default=None,
                   help="replace both qubits' T1 (improved-coherence scenario)")
    p.add_argument("--qubit-t2-us", type=float, default=None,
                   help="replace both qubits' T2")
    p.set_defaults(func=_cmd_stirap)

    p = sub.add_parser("bell", help="entangling pulse pair and phase correction")
    common(p)
    p.add_argument("--eps1-mhz", type=float, default=None)
    p.add_argument("--eps2-mhz", type=float, default=None)
    p.add_argument("--len1-ns", type=float, default=55.0)
    p.add_argument("--len2-ns", type=float, default=130.0)
    p.add_argument("--delay-ns", type=float, default=0.0)
    p.add_argument("--phase-deg", type=float, default=None,
                   help="fixed phase correction (default: fitted)")
    p.set_defaults(func=_cmd_bell)

    p = sub.add_parser("tomo", help="simulated tomography of the entangled state")
    common(p)
    p.add_argument("--len1-ns", type=float, default=55.0)
    p.add_argument("--len2-ns", type=float, default=130.0)
    p.add_argument("--shots", type=int, default=10_000)
    p.add_argument("--error-rate", type=float, default=0.05)
    p.set_defaults(func=_cmd_tomo)

    p = sub.add_parser("optimize", help="closed-loop pulse optimization")
    common(p)
    p.add_argument("--iterations", type=int, default=25)
    p.add_argument("--shots", type=int, default=2000)
    p.add_argument("--final-shots", type=int, default=10_000)
    p.add_argument("--error-rate", type=float, default=0.05)
    p.add_argument("--pool-size", type=int, default=256)
    p.add_argument("--eps-min-frac", type=float, default=0.6)
    p.add_argument("--eps-max-frac", type=float, default=1.0)
    p.add_argument("--len1-min-ns", type=float, default=30.0)
    p.add_argument("--len1-max-ns", type=float, default=110.0)
    p.add_argument("--len2-min-ns", type=float, default=80.0)
    p.add_argument("--len2-max-ns", type=float, default=260.0)
    p.add_argument("--resume", action="store_true",
                   help="continue from the trace file in the output directory")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("coherence", help="link-mode lifetime or dephasing probe")
    common(p)
    p.add_argument("--kind", choices=("T1", "Ramsey"), required=True)
    p.add_argument("--mode", choices=("dark", "bright1", "bright2"), default="dark")
    p.add_argument("--qubit", type=int, default=1)
    p.add_argument("--mode-t2-ns", type=float, default=None,
                   help="add pure mode dephasing with this total T2")
    p.add_argument("--waits-ns", default=None)
    p.set_defaults(func=_cmd_coherence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        overrides = {}
        if args.seed is not None:
            overrides[("run", "seed")] = args.seed
        if args.workers is not None:
            overrides[("run", "workers")] = args.workers
        cfg = load_config(args.config, overrides=overrides)
        outdir = Path(args.out) if args.out else Path("results") / args.command
        outdir.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, args, outdir, started)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, SweepError, MleConvergenceError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
