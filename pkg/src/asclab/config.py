"""Experiment configuration: structured key-value text with nested sections.

Unknown sections or keys are hard errors (fail-closed), values are typed
against a fixed schema, and configs round-trip losslessly through
:meth:`ExperimentConfig.canonical_text`, whose SHA-256 digest is the config
fingerprint carried by every output table.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ConfigError
from .spectral import Grid, SpectralField
from .symbols import MGSymbol, MultiplierSymbol, SQGSymbol
from . import io as ascio
from .dynamics import ForcingSpec, ModelParams
from .profiles import named_field, random_smooth_field

ENV_OUTPUT_DIR = "ASCLAB_OUTPUT_DIR"
ENV_THREADS = "ASCLAB_THREADS"


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_float(s: str) -> float:
    try:
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {s!r}") from exc


def _parse_float_list(s: str) -> List[float]:
    s = s.strip()
    if not s:
        return []
    return [_parse_float(tok) for tok in s.split(",")]


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


# section -> key -> (parser, default); None default means "required"
_SCHEMA: Dict[str, Dict[str, tuple]] = {
    "grid": {
        "dim": (int, 2),
        "n": (int, None),
    },
    "model": {
        "lambda": (_parse_float, 0.0),
        "kappa": (_parse_float, 0.0),
        "gamma": (_parse_float, 1.0),
        "symbol": (str, None),
        "nu": (_parse_float, 1.0),
        "symbol_table": (str, ""),
        "nonlinear": (_parse_bool, True),
    },
    "forcing": {
        "profile": (str, ""),
        "amplitude": (_parse_float, 1.0),
        "snapshot": (str, ""),
    },
    "initial": {
        "profile": (str, "random_smooth"),
        "amplitude": (_parse_float, 1.0),
        "seed": (int, 0),
        "slope": (_parse_float, -3.0),
        "l2_norm": (_parse_float, 1.0),
        "snapshot": (str, ""),
    },
    "time": {
        "t_end": (_parse_float, None),
        "dt": (_parse_float, None),
        "stride": (int, 1),
        "c_cfl": (_parse_float, 0.4),
    },
    "observers": {
        "s_list": (_parse_float_list, [0.5, 1.0]),
        "p_list": (_parse_float_list, [2.0, math.inf]),
        "alpha_list": (_parse_float_list, []),
        "c0": (_parse_float, 1.0),
        "capture": (_parse_bool, False),
    },
    "sweep": {
        "parameter": (str, ""),
        "values": (_parse_float_list, []),
        "s_list": (_parse_float_list, [0.0]),
    },
    "output": {
        "directory": (str, "out"),
    },
}

_SECTION_ORDER = ["grid", "model", "forcing", "initial", "time", "observers", "sweep", "output"]


@dataclass(frozen=True)
class ExperimentConfig:
    values: Dict[str, Dict[str, object]] = field(default_factory=dict)

    def __getitem__(self, section: str) -> Dict[str, object]:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def canonical_text(self) -> str:
        lines = []
        for sec in _SECTION_ORDER:
            lines.append(f"[{sec}]")
            for key in _SCHEMA[sec]:
                lines.append(f"{key} = {_fmt_value(self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def with_model_value(self, key: str, value: float) -> "ExperimentConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals["model"][key] = float(value)
        return replace(self, values=vals)

    def output_dir(self) -> Path:
        override = os.environ.get(ENV_OUTPUT_DIR)
        return Path(override) if override else Path(self.values["output"]["directory"])


def default_threads() -> int:
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {env!r}") from exc
    return min(8, os.cpu_count() or 1)


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values: Dict[str, Dict[str, object]] = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
    for sec, keys in _SCHEMA.items():
        values[sec] = {}
        for key, (parser, default) in keys.items():
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    values[sec][key] = parser(raw)
                except ConfigError:
                    raise
                except Exception as exc:
                    raise ConfigError(f"bad value for [{sec}] {key}: {raw!r}") from exc
            else:
                if default is None:
                    raise ConfigError(f"missing required key {key!r} in section [{sec}]")
                values[sec][key] = default
    cfg = ExperimentConfig(values=values)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def _validate(cfg: ExperimentConfig):
    g = cfg["grid"]
    if g["dim"] not in (2, 3):
        raise ConfigError(f"grid dim must be 2 or 3, got {g['dim']}")
    if g["n"] < 8 or g["n"] % 2:
        raise ConfigError(f"grid n must be an even integer >= 8, got {g['n']}")
    m = cfg["model"]
    if not 0.0 < m["gamma"] <= 2.0:
        raise ConfigError(f"gamma must lie in (0, 2], got {m['gamma']}")
    if m["lambda"] < 0 or m["kappa"] < 0:
        raise ConfigError("lambda and kappa must be nonnegative")
    if m["lambda"] == 0.0 and m["gamma"] < 0.5 and m["nonlinear"]:
        raise ConfigError(
            "undamped configs are restricted to gamma >= 1/2 "
            "(no discrete stability guidance below that)"
        )
    if m["symbol"].upper() not in ("SQG", "MG", "CUSTOM"):
        raise ConfigError(f"unknown symbol {m['symbol']!r}")
    if m["symbol"].upper() == "SQG" and g["dim"] != 2:
        raise ConfigError("SQG requires dim = 2")
    if m["symbol"].upper() == "MG" and g["dim"] != 3:
        raise ConfigError("MG requires dim = 3")
    if m["symbol"].upper() == "CUSTOM" and not m["symbol_table"]:
        raise ConfigError("custom symbol requires symbol_table")
    if m["nu"] <= 0:
        raise ConfigError("nu must be positive")
    t = cfg["time"]
    if t["dt"] <= 0:
        raise ConfigError("dt must be positive")
    if t["t_end"] < 0:
        raise ConfigError("t_end must be nonnegative")
    if t["t_end"] > 0:
        n = round(t["t_end"] / t["dt"])
        if n < 1 or abs(n * t["dt"] - t["t_end"]) > 1e-9 * max(1.0, t["t_end"]):
            raise ConfigError("t_end must be an integer multiple of dt")
    if t["stride"] < 1:
        raise ConfigError("stride must be >= 1")
    sw = cfg["sweep"]
    if sw["parameter"]:
        if sw["parameter"] not in ("kappa", "lambda"):
            raise ConfigError(f"sweep parameter must be kappa or lambda, got {sw['parameter']!r}")
        vals = sw["values"]
        if not vals:
            raise ConfigError("sweep requires a values list")
        if any(v < 0 for v in vals):
            raise ConfigError("sweep values must be nonnegative")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly decreasing")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_grid(cfg: ExperimentConfig) -> Grid:
    return Grid.of(cfg["grid"]["dim"], cfg["grid"]["n"])


def build_symbol(cfg: ExperimentConfig) -> MultiplierSymbol:
    m = cfg["model"]
    kind = m["symbol"].upper()
    if kind == "SQG":
        return SQGSymbol()
    if kind == "MG":
        return MGSymbol(m["nu"])
    sym = ascio.read_symbol_table(m["symbol_table"])
    if sym.dim != cfg["grid"]["dim"]:
        raise ConfigError("symbol table dimension does not match grid")
    return sym


def build_params(cfg: ExperimentConfig, sym: Optional[MultiplierSymbol] = None) -> ModelParams:
    m = cfg["model"]
    return ModelParams(
        lam=m["lambda"], kappa=m["kappa"], gamma=m["gamma"], sym=sym or build_symbol(cfg)
    )


def _default_forcing_profile(dim: int) -> str:
    return "cos_x1" if dim == 2 else "cos_x1_cos_x3"


def build_forcing(cfg: ExperimentConfig, grid: Grid, sym: MultiplierSymbol) -> ForcingSpec:
    f = cfg["forcing"]
    if f["snapshot"]:
        fld = ascio.read_field(f["snapshot"])
        if fld.grid is not grid:
            raise ConfigError("forcing snapshot grid does not match config grid")
    else:
        profile = f["profile"] or _default_forcing_profile(grid.dim)
        fld = named_field(grid, profile, f["amplitude"])
    return ForcingSpec(fld, sym)


def build_theta0(cfg: ExperimentConfig, grid: Grid, sym: MultiplierSymbol) -> SpectralField:
    ini = cfg["initial"]
    forced_zero = ~sym.state_keep_mask(grid)
    if ini["snapshot"]:
        fld = ascio.read_field(ini["snapshot"])
        if fld.grid is not grid:
            raise ConfigError("initial snapshot grid does not match config grid")
        return fld
    if ini["profile"] == "random_smooth":
        return random_smooth_field(
            grid,
            seed=ini["seed"],
            slope=ini["slope"],
            l2_norm=ini["l2_norm"],
            forced_zero=forced_zero,
        )
    return named_field(grid, ini["profile"], ini["amplitude"])


def run_kwargs(cfg: ExperimentConfig) -> dict:
    obs = cfg["observers"]
    return dict(
        stride=cfg["time"]["stride"],
        nonlinear=cfg["model"]["nonlinear"],
        s_list=obs["s_list"],
        p_list=obs["p_list"],
        alpha_list=obs["alpha_list"],
        capture_fields=obs["capture"],
        c_cfl=cfg["time"]["c_cfl"],
        fingerprint=cfg.fingerprint(),
    )
