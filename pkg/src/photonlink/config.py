"""Configuration loading for the command-line tools.

Config files are INI-style sectioned key-value text. All frequencies and
couplings are megahertz and all times are nanoseconds on this surface; values
are converted to the library's Hz/s at the boundary. Any subset of keys may
be given; the rest fall back to the built-in defaults, which reproduce the
reference device pair. Unknown sections or keys are rejected with the line
they appear on, as are unparsable or unphysical values.
"""

from __future__ import annotations

import configparser
import io
import os
import re
from dataclasses import dataclass

from .model import DeviceParams, InterconnectParams, PhotonLink

__all__ = ["ConfigError", "RunConfig", "load_config", "DEFAULTS", "ENV_CONFIG"]

ENV_CONFIG = "PHOTONLINK_CONFIG"

MHZ = 1e6
NS = 1e-9

DEFAULTS: dict[str, dict[str, str]] = {
    "device1": {
        "nu_q_mhz": "4768.5",
        "alpha_mhz": "109.8",
        "nu_r_mhz": "5746.3",
        "g_qc_mhz": "50.0",
        "t1_ns": "10100",
        "t2_ns": "700",
        "drive_t1_ns": "5000",
        "drive_t2_ns": "260",
    },
    "device2": {
        "nu_q_mhz": "4742.0",
        "alpha_mhz": "109.9",
        "nu_r_mhz": "5740.5",
        "g_qc_mhz": "50.0",
        "t1_ns": "7900",
        "t2_ns": "1400",
        "drive_t1_ns": "4000",
        "drive_t2_ns": "520",
    },
    "interconnect": {
        "nu_c_mhz": "7880.0",
        "delta_mhz": "4.25",
        "g_l_mhz": "6.46",
        "dark_t1_ns": "550",
        "bright_t1_ns": "200",
    },
    "link": {
        "g_eff_target_mhz": "2.0",
        "mode_levels": "2",
    },
    "run": {
        "seed": "1234",
        "workers": "1",
    },
}

_INT_KEYS = {("link", "mode_levels"), ("run", "seed"), ("run", "workers")}
_OPTIONAL_KEYS = {
    ("device1", "drive_t1_ns"),
    ("device1", "drive_t2_ns"),
    ("device2", "drive_t1_ns"),
    ("device2", "drive_t2_ns"),
}


class ConfigError(ValueError):
    """Invalid configuration; the message carries file and line context."""


def _line_of(text: str, section: str, key: str | None) -> int:
    """1-based line of a key inside its section (or of the section header)."""
    lines = text.splitlines()
    header = re.compile(rf"^\s*\[{re.escape(section)}\]\s*$")
    in_section = False
    section_line = 0
    for i, line in enumerate(lines, start=1):
        if header.match(line):
            in_section = True
            section_line = i
            continue
        if in_section and re.match(r"^\s*\[", line):
            break
        if in_section and key is not None:
            if re.match(rf"^\s*{re.escape(key)}\s*[=:]", line):
                return i
    return section_line


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run parameters in library units (Hz, s)."""

    devices: tuple[DeviceParams, DeviceParams]
    interconnect: InterconnectParams
    drive_coherence: tuple
    g_eff_target: float
    mode_levels: int
    seed: int
    workers: int
    raw: dict[str, dict[str, str]]

    def build_link(self) -> PhotonLink:
        return PhotonLink.assemble(
            self.devices,
            self.interconnect,
            g_eff_target=self.g_eff_target,
            drive_coherence=self.drive_coherence,
            mode_levels=self.mode_levels,
        )

    def echo_ini(self) -> str:
        """The resolved configuration as INI text; feeding it back through
        ``load_config`` reproduces this RunConfig."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, mapping in self.raw.items():
            parser[section] = dict(mapping)
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def _parse_value(section, key, value, source, text):
    kind = int if (section, key) in _INT_KEYS else float
    stripped = value.strip()
    if stripped == "" and (section, key) in _OPTIONAL_KEYS:
        return None
    try:
        return kind(stripped)
    except ValueError:
        line = _line_of(text, section, key)
        raise ConfigError(
            f"{source}:{line}: {section}.{key} must be {kind.__name__}, "
            f"got {value!r}"
        ) from None


def load_config(path: str | None = None, *, overrides: dict | None = None) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional file, and overrides.

    ``path`` falls back to the PHOTONLINK_CONFIG environment variable, then to
    the built-in defaults. ``overrides`` maps (section, key) to replacement
    string values and is applied last (command-line flags land here).
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None

    merged = {s: dict(kv) for s, kv in DEFAULTS.items()}
    text = ""
    source = "<defaults>"
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        source = str(path)
        parser = configparser.ConfigParser(
            interpolation=None, inline_comment_prefixes=("#", ";")
        )
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        for section in parser.sections():
            if section not in merged:
                line = _line_of(text, section, None)
                raise ConfigError(
                    f"{source}:{line}: unknown section [{section}] "
                    f"(expected one of {sorted(merged)})"
                )
            for key, value in parser[section].items():
                if key not in merged[section]:
                    line = _line_of(text, section, key)
                    raise ConfigError(
                        f"{source}:{line}: unknown key {key!r} in [{section}] "
                        f"(expected one of {sorted(merged[section])})"
                    )
                merged[section][key] = value

    for (section, key), value in (overrides or {}).items():
        if section not in merged or key not in merged[section]:
            raise ConfigError(f"unknown override {section}.{key}")
        merged[section][key] = str(value)

    val = {
        section: {
            key: _parse_value(section, key, v, source, text)
            for key, v in mapping.items()
        }
        for section, mapping in merged.items()
    }

    ic_sec = val["interconnect"]
    for name, key in (("dark_t1_ns", "dark_t1_ns"), ("bright_t1_ns", "bright_t1_ns")):
        if ic_sec[key] is not None and ic_sec[key] <= 0:
            line = _line_of(text, "interconnect", key)
            raise ConfigError(f"{source}:{line}: interconnect.{name} must be positive")

    try:
        interconnect = InterconnectParams(
            nu_c=ic_sec["nu_c_mhz"] * MHZ,
            delta=ic_sec["delta_mhz"] * MHZ,
            g_l=ic_sec["g_l_mhz"] * MHZ,
            kappa_dark=1.0 / (ic_sec["dark_t1_ns"] * NS),
            kappa_bright=1.0 / (ic_sec["bright_t1_ns"] * NS),
        )
    except ValueError as exc:
        line = _line_of(text, "interconnect", None)
        raise ConfigError(f"{source}:{line}: [interconnect]: {exc}") from exc

    devices = []
    drive = []
    for section in ("device1", "device2"):
        d = val[section]
        try:
            devices.append(
                DeviceParams(
                    nu_q=d["nu_q_mhz"] * MHZ,
                    alpha=d["alpha_mhz"] * MHZ,
                    nu_r=d["nu_r_mhz"] * MHZ,
                    nu_c=interconnect.nu_c,
                    g_qc=d["g_qc_mhz"] * MHZ,
                    T1=d["t1_ns"] * NS,
                    T2=d["t2_ns"] * NS,
                )
            )
        except ValueError as exc:
            line = _line_of(text, section, None)
            raise ConfigError(f"{source}:{line}: [{section}]: {exc}") from exc
        t1d, t2d = d["drive_t1_ns"], d["drive_t2_ns"]
        if (t1d is None) != (t2d is None):
            line = _line_of(text, section, "drive_t1_ns")
            raise ConfigError(
                f"{source}:{line}: [{section}]: drive_t1_ns and drive_t2_ns "
                f"must be given together or both left empty"
            )
        drive.append(None if t1d is None else (t1d * NS, t2d * NS))

    run = val["run"]
    if run["workers"] < 1:
        line = _line_of(text, "run", "workers")
        raise ConfigError(f"{source}:{line}: run.workers must be >= 1")
    if val["link"]["mode_levels"] < 2:
        line = _line_of(text, "link", "mode_levels")
        raise ConfigError(f"{source}:{line}: link.mode_levels must be >= 2")

    return RunConfig(
        devices=tuple(devices),
        interconnect=interconnect,
        drive_coherence=tuple(drive),
        g_eff_target=val["link"]["g_eff_target_mhz"] * MHZ,
        mode_levels=val["link"]["mode_levels"],
        seed=run["seed"],
        workers=run["workers"],
        raw=merged,
    )
