"""Run configuration: flat INI-style sections, deterministic manifests.

A config fully determines a run; the manifest written next to every
output echoes the effective configuration and carries a git-style blob
hash of its canonical text, which every output file repeats so report
tooling can reject orphans.
"""

import configparser
import hashlib
import json
import os

import numpy as np

from .errors import ConfigError
from .grid import PeriodicGrid, ScalarField
from .params import ExpansionSpec, NondimParams, validate_params

_DEFAULTS = {
    "params": {"delta": "0.1", "delta_sweep": ""},
    "spec": {},
    "grid": {"M": "128", "length": str(2.0 * np.pi), "P_reference": "16"},
    "initial": {"zeta_sin": "", "zeta_cos": "", "phi_sin": "", "phi_cos": "",
                 "b_sin": "", "b_cos": ""},
    "run": {"T": "1.0", "dt": "1e-3", "stride": "10", "energy_m": "1",
             "halt_on_instability": "true", "cstab": "0.5"},
    "output": {"directory": "out", "formats": "csv,json"},
}

_REQUIRED = {("params", "rho1"), ("params", "h1"), ("spec", "N"), ("spec", "case")}


class RunConfig:
    """Parsed and validated configuration with the raw key-value echo."""

    def __init__(self, sections: dict):
        self.sections = sections
        try:
            self.rho1 = float(self._get("params", "rho1"))
            self.h1 = float(self._get("params", "h1"))
            self.delta = float(self._get("params", "delta"))
            sweep = self._get("params", "delta_sweep").strip()
            self.delta_sweep = (
                tuple(float(tok) for tok in sweep.split(",") if tok.strip())
                if sweep else ()
            )
            self.N = int(self._get("spec", "N"))
            self.case = self._get("spec", "case").strip()
            self.M = int(self._get("grid", "M"))
            self.length = float(self._get("grid", "length"))
            self.P_reference = int(self._get("grid", "P_reference"))
            self.T = float(self._get("run", "T"))
            self.dt = float(self._get("run", "dt"))
            self.stride = int(self._get("run", "stride"))
            self.energy_m = int(self._get("run", "energy_m"))
            self.halt_on_instability = self._get("run", "halt_on_instability").lower() in (
                "true", "1", "yes")
            self.cstab = float(self._get("run", "cstab"))
            self.out_dir = self._get("output", "directory")
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        if self.case not in ("H1", "H2"):
            raise ConfigError(f"spec.case must be H1 or H2, got {self.case!r}")

    def _get(self, section: str, key: str) -> str:
        sec = self.sections.get(section, {})
        if key in sec:
            return sec[key]
        if key in _DEFAULTS.get(section, {}):
            return _DEFAULTS[section][key]
        raise ConfigError(f"missing required config field [{section}] {key}")

    # -- model objects ------------------------------------------------------

    def params(self, delta: float | None = None) -> NondimParams:
        return validate_params(self.rho1, self.h1, delta if delta is not None else self.delta)

    def spec(self) -> ExpansionSpec:
        return ExpansionSpec.from_case(self.case, self.N)

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.M, self.length)

    def _modes(self, section_key: str) -> dict:
        raw = self._get("initial", section_key).strip()
        out = {}
        if not raw:
            return out
        for tok in raw.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                k, amp = tok.split(":")
                out[int(k)] = float(amp)
            except ValueError:
                raise ConfigError(
                    f"bad mode token {tok!r} in [initial] {section_key}; want k:amp"
                ) from None
        return out

    def initial_fields(self, grid: PeriodicGrid):
        zeta = ScalarField.from_modes(grid, sin=self._modes("zeta_sin"),
                                      cos=self._modes("zeta_cos"))
        phi = ScalarField.from_modes(grid, sin=self._modes("phi_sin"),
                                     cos=self._modes("phi_cos"))
        b = ScalarField.from_modes(grid, sin=self._modes("b_sin"),
                                   cos=self._modes("b_cos"))
        return zeta, phi, b

    # -- determinism --------------------------------------------------------

    def canonical_text(self) -> str:
        lines = []
        for section in sorted(self.sections):
            lines.append(f"[{section}]")
            for key in sorted(self.sections[section]):
                lines.append(f"{key} = {self.sections[section][key]}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        """Git-style blob hash of the canonical config text."""
        body = self.canonical_text().encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (M, N, T, ...)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    for section, key in _REQUIRED:
        if key not in sections.get(section, {}):
            raise ConfigError(f"missing required config field [{section}] {key}")
    return RunConfig(sections)


def fmt(x: float) -> str:
    """Float formatting used in every CSV: 17 significant digits."""
    return f"{x:.17g}"


def write_manifest(path: str, config: RunConfig, outputs, extra=None):
    doc = {
        "config": config.sections,
        "config_hash": config.content_hash(),
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc
