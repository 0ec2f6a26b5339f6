"""Run configuration: flat INI files with per-command sections.

Precedence: built-in defaults < config file < HBMC_SECTION__KEY environment
overrides.  All values are validated through the typed getters, which raise
ConfigError carrying the (section, key) location.  serialize(parse(f)) is
idempotent, and the canonical serialization is hashed into run outputs for
provenance.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os

from .errors import ConfigError

ENV_PREFIX = "HBMC_"

DEFAULTS: dict[str, dict[str, str]] = {
    "drift": {
        "kind": "linear_y",
        "k0": "1.0",
        "c": "0.5",
        "table_csv": "",
    },
    "kernels": {
        "t_values": "0.25, 1, 4",
        "r_values": "0.1, 0.5, 1, 2, 5",
        "tol_p2": "1e-6",
        "tol_p4": "1e-4",
    },
    "validate-drift": {
        "box": "-5, 5, 0.05, 20",
        "samples": "65536",
    },
    "estimate": {
        "t": "0.5",
        "x0": "0.0",
        "y0": "1.0",
        "n_paths": "100000",
        "rate": "1.0",
        "payoffs": "x; one",
        "payoff_cap": "1e6",
        "substeps_per_unit": "512",
        "block_size": "16384",
    },
    "compare": {
        "t_values": "0.25, 0.5",
        "x0": "0.0",
        "y0": "1.0",
        "n_paths": "100000",
        "rate": "1.0",
        "payoffs": "x; cos_exp; indicator_box:0,1,0.5,2",
        "drifts": "linear_y,0.5,1.0; sine_x,1.0,1.0",
        "euler_steps": "4096",
        "block_size": "16384",
        "invert_oracle_drift": "false",
    },
    "density": {
        "t": "0.5",
        "x0": "0.0",
        "y0": "1.0",
        "n_terms": "2",
        "x_lo": "-1.5",
        "x_hi": "1.5",
        "y_lo": "0.45",
        "y_hi": "2.2",
        "nx": "8",
        "ny": "8",
        "n_paths": "200000",
        "rate": "1.0",
        "cell_subdiv": "2",
        "block_size": "16384",
    },
    "selftest": {
        "n_paths": "100000",
        "n_clocks": "100000",
        "theta_samples": "2048",
    },
}


class RunConfig:
    """Validated view over the merged section/key string table."""

    def __init__(self, data: dict[str, dict[str, str]]):
        self._data = data

    def raw(self, section: str, key: str) -> str:
        try:
            return self._data[section][key]
        except KeyError:
            raise ConfigError("missing required value", section, key) from None

    def get_str(self, section, key, choices=None) -> str:
        v = self.raw(section, key).strip()
        if choices is not None and v not in choices:
            raise ConfigError(f"expected one of {sorted(choices)}, got {v!r}",
                              section, key)
        return v

    def get_float(self, section, key, minimum=None, maximum=None) -> float:
        raw = self.raw(section, key)
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"not a number: {raw!r}", section, key) from None
        if v != v:
            raise ConfigError("NaN is not allowed", section, key)
        if minimum is not None and v < minimum:
            raise ConfigError(f"value {v} below minimum {minimum}", section, key)
        if maximum is not None and v > maximum:
            raise ConfigError(f"value {v} above maximum {maximum}", section, key)
        return v

    def get_int(self, section, key, minimum=None, maximum=None) -> int:
        raw = self.raw(section, key)
        try:
            v = int(raw)
        except ValueError:
            raise ConfigError(f"not an integer: {raw!r}", section, key) from None
        if minimum is not None and v < minimum:
            raise ConfigError(f"value {v} below minimum {minimum}", section, key)
        if maximum is not None and v > maximum:
            raise ConfigError(f"value {v} above maximum {maximum}", section, key)
        return v

    def get_bool(self, section, key) -> bool:
        raw = self.raw(section, key).strip().lower()
        if raw in ("true", "yes", "on", "1"):
            return True
        if raw in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}", section, key)

    def get_float_list(self, section, key, minimum=None) -> list[float]:
        raw = self.raw(section, key)
        out = []
        for part in raw.replace(";", ",").split(","):
            part = part.strip()
            if not part:
                continue
            try:
                v = float(part)
            except ValueError:
                raise ConfigError(f"bad list entry {part!r}", section, key) from None
            if minimum is not None and v < minimum:
                raise ConfigError(f"list entry {v} below minimum {minimum}",
                                  section, key)
            out.append(v)
        if not out:
            raise ConfigError("empty list", section, key)
        return out

    def get_str_list(self, section, key) -> list[str]:
        out = [p.strip() for p in self.raw(section, key).split(";") if p.strip()]
        if not out:
            raise ConfigError("empty list", section, key)
        return out

    def serialize(self) -> str:
        """Canonical text form: sorted sections and keys."""
        buf = io.StringIO()
        for section in sorted(self._data):
            buf.write(f"[{section}]\n")
            for key in sorted(self._data[section]):
                buf.write(f"{key} = {self._data[section][key]}\n")
            buf.write("\n")
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:12]


def load_config(path: str | None = None, env=None) -> RunConfig:
    """Merge defaults, an optional INI file, and HBMC_SECTION__KEY env vars."""
    data = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for section in parser.sections():
            if section not in data:
                raise ConfigError(f"unknown section [{section}]; known: "
                                  f"{sorted(data)}")
            for key, value in parser.items(section):
                if key not in data[section]:
                    raise ConfigError("unknown key", section, key)
                data[section][key] = value
    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, _, key = name[len(ENV_PREFIX):].partition("__")
        section = section.lower().replace("_", "-")
        key = key.lower()
        if section in data and key in data[section]:
            data[section][key] = value
    return RunConfig(data)


def parse_config_text(text: str) -> RunConfig:
    """Parse an INI document from a string (defaults merged in)."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config text: {exc}") from exc
    data = {s: dict(kv) for s, kv in DEFAULTS.items()}
    for section in parser.sections():
        if section not in data:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in data[section]:
                raise ConfigError("unknown key", section, key)
            data[section][key] = value
    return RunConfig(data)
