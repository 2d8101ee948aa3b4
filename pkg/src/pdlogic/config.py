"""Strict run configuration loaded from YAML (or the JSON metadata sidecars)."""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import yaml

from .models import DlmParams, DpoParams, KpoParams, lambda_critical
from .protocols import Numerics
from .sweeps import Axis

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "apply_overrides",
           "preset_names", "preset_path", "build_params"]


class ConfigError(ValueError):
    pass


MODEL_FIELDS = {
    "dpo": {"required": ("Omega", "A", "Omega_d", "gamma", "T_tilde"), "optional": ()},
    "kpo": {"required": ("Delta", "chi", "p0", "A0", "omega_mod", "kappa", "N"),
            "optional": ("J",)},
    "dlm": {"required": ("omega", "omega0", "A1", "omega_d", "kappa", "N"),
            "optional": ("J", "lambda0", "lambda0_fraction", "lambda_c_form")},
}


@dataclass
class ProtocolSection:
    kind: str = "NAND"
    inputs: list = field(default_factory=lambda: [1, 1])
    coupling: float = 0.0
    Tq: float = 1.0
    relax_before: float = 60.0
    relax_after: float = 100.0
    pulse_offset: float = 0.0
    count_pseudo: bool = True
    noise: bool | None = None
    seed: int = 0
    bit: int = 1
    reference_bit: int = 1
    output_init: int | None = None
    quench: float = 100.0


@dataclass
class AxisSection:
    min: float
    max: float
    count: int


@dataclass
class SweepSection:
    coupling: AxisSection | None = None
    Tq: AxisSection | None = None
    n_realizations: int = 20
    base_seed: int = 0


@dataclass
class IntegrationSection:
    steps_per_period: int = 512
    samples_per_subharmonic: int = 64
    readout_windows: int = 8
    r_min_fraction: float = 0.05


@dataclass
class SimulateSection:
    periods: float = 150.0
    init: list | None = None
    noise_from: float | None = None


@dataclass
class BasinsSection:
    frame: str = "lab"
    x: AxisSection | None = None
    y: AxisSection | None = None
    t_final: float = 150.0
    seed_count: int = 201
    seed_theta: list = field(default_factory=lambda: [-math.pi, math.pi])
    seed_theta_dot: list = field(default_factory=lambda: [-3.0, 3.0])


@dataclass
class OutputSection:
    dir: str = "."
    prefix: str = "run"


@dataclass
class RunConfig:
    model: dict
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    integration: IntegrationSection = field(default_factory=IntegrationSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    basins: BasinsSection = field(default_factory=BasinsSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return {"model": dict(self.model),
                **{f.name: dataclasses.asdict(getattr(self, f.name))
                   for f in dataclasses.fields(self) if f.name != "model"}}

    @property
    def numerics(self) -> Numerics:
        return Numerics(**dataclasses.asdict(self.integration))

    def params(self, M: int = 1):
        return build_params(self.model, M)

    def axis(self, name: str) -> Axis:
        sec = getattr(self.sweep, name)
        if sec is None:
            raise ConfigError(f"sweep.{name} is required for this command")
        try:
            return Axis(name, float(sec.min), float(sec.max), int(sec.count))
        except ValueError as exc:
            raise ConfigError(f"sweep.{name}: {exc}") from exc

    def basin_axis(self, which: str) -> Axis:
        sec = getattr(self.basins, which)
        if sec is None:
            raise ConfigError(f"basins.{which} is required")
        return Axis(which, float(sec.min), float(sec.max), int(sec.count))


_FLOAT_WORDS = {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _number(value, where):
    if isinstance(value, str) and value.strip().lower() in _FLOAT_WORDS:
        return _FLOAT_WORDS[value.strip().lower()]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return value


def _build(cls, data, where):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = str(fields[name].type)
        sub = f"{where}.{name}"
        if "AxisSection" in ftype and value is not None:
            value = _build(AxisSection, value, sub)
            value.count = int(_number(value.count, sub + ".count"))
        elif ftype.startswith("float") and value is not None:
            value = float(_number(value, sub))
        elif ftype.startswith("int") and value is not None:
            v = _number(value, sub)
            if float(v) != int(v):
                raise ConfigError(f"{sub}: expected an integer")
            value = int(v)
        elif ftype.startswith("bool") and value is not None and not isinstance(value, bool):
            raise ConfigError(f"{sub}: expected true/false")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _check_model(model):
    if not isinstance(model, dict):
        raise ConfigError("model: expected a mapping")
    kind = str(model.get("kind", "")).lower()
    if kind not in MODEL_FIELDS:
        raise ConfigError(f"model.kind must be one of {sorted(MODEL_FIELDS)}")
    spec = MODEL_FIELDS[kind]
    allowed = {"kind", *spec["required"], *spec["optional"]}
    unknown = sorted(set(model) - allowed)
    if unknown:
        raise ConfigError(f"model: unknown key(s) {', '.join(unknown)} for kind {kind}")
    missing = [k for k in spec["required"] if k not in model]
    if missing:
        raise ConfigError(f"model: missing physical parameter(s) {', '.join(missing)}")
    out = {"kind": kind}
    for k, v in model.items():
        if k in ("kind", "lambda_c_form"):
            continue
        out[k] = float(_number(v, f"model.{k}"))
    if kind == "dlm":
        if ("lambda0" in model) == ("lambda0_fraction" in model):
            raise ConfigError("model: give exactly one of lambda0, lambda0_fraction")
        if "lambda_c_form" in model:
            out["lambda_c_form"] = str(model["lambda_c_form"])
    return out


def build_params(model: dict, M: int = 1):
    """Model parameters for an ``M``-site network (coupling topology added by protocols)."""
    m = dict(model)
    kind = m.pop("kind")
    try:
        if kind == "dpo":
            return DpoParams(M=M, **m)
        if kind == "kpo":
            return KpoParams(M=M, **m)
        frac = m.pop("lambda0_fraction", None)
        if frac is not None:
            probe = DlmParams(lambda0=0.0, M=1, **{k: v for k, v in m.items() if k != "J"})
            m["lambda0"] = frac * lambda_critical(probe)
        return DlmParams(M=M, **m)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    if "config" in data and "model" not in data:
        data = data["config"]  # a metadata sidecar: use its echoed config
        if not isinstance(data, dict):
            raise ConfigError("metadata file carries no config echo")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    if "model" not in data:
        raise ConfigError("missing model section")
    cfg = RunConfig(
        model=_check_model(data["model"]),
        protocol=_build(ProtocolSection, data.get("protocol"), "protocol"),
        sweep=_build(SweepSection, data.get("sweep"), "sweep"),
        integration=_build(IntegrationSection, data.get("integration"), "integration"),
        simulate=_build(SimulateSection, data.get("simulate"), "simulate"),
        basins=_build(BasinsSection, data.get("basins"), "basins"),
        output=_build(OutputSection, data.get("output"), "output"),
    )
    cfg.protocol.kind = cfg.protocol.kind.upper()
    if cfg.protocol.kind not in ("NAND", "NOR", "FLIP", "RESET"):
        raise ConfigError(f"protocol.kind {cfg.protocol.kind!r} unknown")
    if cfg.basins.frame not in ("lab", "rotating"):
        raise ConfigError("basins.frame must be lab or rotating")
    try:
        cfg.numerics
        build_params(cfg.model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"bad override key {key!r}")
        node = data
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r}: {p} is not a section")
            node = nxt
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def preset_names() -> list:
    root = resources.files("pdlogic") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str) -> str:
    return str(resources.files("pdlogic") / "presets" / f"{name}.yaml")


def read_config_data(path_or_preset: str) -> dict:
    path = path_or_preset
    if not os.path.exists(path):
        if path_or_preset in preset_names():
            path = preset_path(path_or_preset)
        else:
            raise ConfigError(f"no such config file or preset: {path_or_preset}")
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return data if data is not None else {}


def load_config(path_or_preset: str, overrides=()) -> RunConfig:
    """Load a YAML config, a JSON sidecar, or a shipped preset by name."""
    return parse_config(apply_overrides(read_config_data(path_or_preset), overrides))
