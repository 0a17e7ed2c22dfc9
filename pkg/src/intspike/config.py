"""Experiment configuration: strict INI-style files plus overrides.

A config is flat key=value text in four sections (experiment, model,
layer1, layer2).  Unknown sections or keys are hard errors; silent typos
have ruined enough experiments.  Parsing resolves per-dataset defaults
and derived quantities, and validates the width/precision constraints the
training engine depends on, in particular that the correlation trace can
never saturate when the factored gradient path is active.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace

from .neuron import decay_shift
from .tensor import MAX_BITS, MIN_BITS


class ConfigError(ValueError):
    pass


DATASET_DEFAULTS = {
    # dataset: (inputs, classes, input_max, input_bits)
    "toy": (20, 2, 1, 1),
    "mnist": (784, 10, 1, 1),
    "shd": (175, 20, 15, 4),
}

ARCHES = ("fc", "conv", "recurrent")
TRACE_MODES = ("factored", "explicit")
UPDATE_TIMINGS = ("sequence", "timestep")
COUNTING_MODES = ("event", "dense")


@dataclass(frozen=True)
class LayerHyper:
    v_th: int = 64
    grad_win: int = 0          # 0 resolves to v_th >> 1
    beta: float = 0.5
    eta_shift: int = 8
    rho_shift: int = 12


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 100
    inputs: int = 0            # 0 resolves from the dataset
    classes: int = 0
    shadow_bits: int = 16
    lp_bits: int = 8
    v_bits: int = 32
    t_pre_bits: int = 16
    t_corr_bits: int = 16
    kernel: int = 5
    out_channels: int = 32
    stride: int = 2
    padding: int = 0
    in_channels: int = 1
    in_height: int = 28
    in_width: int = 28
    input_max: int = 1         # resolved from the dataset
    input_bits: int = 1

    @property
    def in_hw(self) -> tuple[int, int]:
        return (self.in_height, self.in_width)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "toy"
    arch: str = "fc"
    epochs: int = 50
    batch_size: int = 128
    t_s: int = 10
    alpha: int = 32
    delta_max: int = 1024
    seeds: tuple[int, ...] = (0,)
    trace_mode: str = "factored"
    counting: str = "event"
    update_timing: str = "sequence"
    model: ModelConfig = ModelConfig()
    layer1: LayerHyper = LayerHyper()
    layer2: LayerHyper = LayerHyper()

    @property
    def alpha_shift(self) -> int:
        return self.alpha.bit_length() - 1

    @property
    def ts_shift(self) -> int:
        return self.t_s.bit_length() - 1


_INT = int
_FLOAT = float


def _seeds(text: str) -> tuple[int, ...]:
    """"5" means five seeds 0..4; "3," or "1,2,3" is an explicit list."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if len(parts) == 1 and "," not in str(text):
        n = int(parts[0])
        if n < 0:
            raise ConfigError(f"seed count must be >= 0, got {n}")
        return tuple(range(n))
    return tuple(int(p) for p in parts)


def _choice(options):
    def parse(text):
        if text not in options:
            raise ConfigError(f"expected one of {options}, got {text!r}")
        return text
    return parse


SCHEMA = {
    "experiment": {
        "dataset": _choice(tuple(DATASET_DEFAULTS)),
        "arch": _choice(ARCHES),
        "epochs": _INT,
        "batch_size": _INT,
        "t_s": _INT,
        "alpha": _INT,
        "delta_max": _INT,
        "seeds": _seeds,
        "trace_mode": _choice(TRACE_MODES),
        "counting": _choice(COUNTING_MODES),
        "update_timing": _choice(UPDATE_TIMINGS),
    },
    "model": {
        "hidden": _INT, "inputs": _INT, "classes": _INT,
        "shadow_bits": _INT, "lp_bits": _INT, "v_bits": _INT,
        "t_pre_bits": _INT, "t_corr_bits": _INT,
        "kernel": _INT, "out_channels": _INT, "stride": _INT, "padding": _INT,
        "in_channels": _INT, "in_height": _INT, "in_width": _INT,
    },
    "layer1": {
        "v_th": _INT, "grad_win": _INT, "beta": _FLOAT,
        "eta_shift": _INT, "rho_shift": _INT,
    },
    "layer2": {
        "v_th": _INT, "grad_win": _INT, "beta": _FLOAT,
        "eta_shift": _INT, "rho_shift": _INT,
    },
}


def _raw_sections(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _apply_schema(raw: dict[str, dict[str, str]]):
    unknown = []
    for section in raw:
        if section not in SCHEMA:
            unknown.append(f"[{section}]")
    for section, keys in raw.items():
        for key in keys:
            if section in SCHEMA and key not in SCHEMA[section]:
                unknown.append(f"{section}.{key}")
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    parsed = {}
    for section, keys in raw.items():
        out = {}
        for key, value in keys.items():
            try:
                out[key] = SCHEMA[section][key](value)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from exc
        parsed[section] = out
    return parsed


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse config text, apply `section.key=value` overrides, validate."""
    raw = _raw_sections(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        if "." not in key:
            raise ConfigError(f"override key {key!r} is not section.key")
        section, name = key.strip().split(".", 1)
        raw.setdefault(section, {})[name.strip()] = value.strip()
    parsed = _apply_schema(raw)
    cfg = ExperimentConfig(
        **parsed.get("experiment", {}),
        model=ModelConfig(**parsed.get("model", {})),
        layer1=LayerHyper(**parsed.get("layer1", {})),
        layer2=LayerHyper(**parsed.get("layer2", {})),
    )
    return resolve(cfg)


def load_config(path, overrides=()) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read(), overrides)


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill dataset-dependent defaults and derived fields, then validate."""
    inputs, classes, input_max, input_bits = DATASET_DEFAULTS[cfg.dataset]
    m = cfg.model
    m = replace(
        m,
        inputs=m.inputs or inputs,
        classes=m.classes or classes,
        input_max=input_max,
        input_bits=input_bits,
    )
    l1 = cfg.layer1
    l2 = cfg.layer2
    if l1.grad_win == 0:
        l1 = replace(l1, grad_win=max(l1.v_th >> 1, 1))
    if l2.grad_win == 0:
        l2 = replace(l2, grad_win=max(l2.v_th >> 1, 1))
    cfg = replace(cfg, model=m, layer1=l1, layer2=l2)
    validate(cfg)
    return cfg


def _trace_bound(input_max: int, beta_shift: int, t_s: int) -> tuple[int, int]:
    """Worst-case presynaptic and correlation trace magnitudes."""
    pre = 2 * input_max if beta_shift >= 1 else t_s * input_max
    return pre, t_s * pre


def validate(cfg: ExperimentConfig) -> None:
    errs = []
    if cfg.epochs < 0:
        errs.append("experiment.epochs must be >= 0")
    if cfg.batch_size < 1:
        errs.append("experiment.batch_size must be >= 1")
    if cfg.t_s < 1:
        errs.append("experiment.t_s must be >= 1")
    if cfg.alpha < 1 or (cfg.alpha & (cfg.alpha - 1)):
        errs.append("experiment.alpha must be a positive power of two "
                    "(scaling is a bit shift)")
    if cfg.delta_max < 1:
        errs.append("experiment.delta_max must be >= 1")
    if cfg.update_timing == "timestep" and cfg.trace_mode != "explicit":
        errs.append("per-timestep updates require trace_mode=explicit")

    m = cfg.model
    for name in ("shadow_bits", "lp_bits", "v_bits", "t_pre_bits",
                 "t_corr_bits"):
        bits = getattr(m, name)
        if not (MIN_BITS <= bits <= MAX_BITS):
            errs.append(f"model.{name} must be in [{MIN_BITS}, {MAX_BITS}]")
    if m.shadow_bits < m.lp_bits:
        errs.append(f"model.shadow_bits ({m.shadow_bits}) below "
                    f"model.lp_bits ({m.lp_bits})")
    if m.hidden < 1 or m.inputs < 1 or m.classes < 2:
        errs.append("model.hidden/inputs/classes out of range")
    if cfg.arch == "conv":
        if m.in_channels * m.in_height * m.in_width != m.inputs:
            errs.append(
                f"conv geometry {m.in_channels}x{m.in_height}x{m.in_width} "
                f"does not flatten to model.inputs={m.inputs}")
    if m.v_bits < 17 and cfg.arch == "recurrent":
        errs.append("recurrent tap needs model.v_bits >= 17")

    for idx, (layer, in_max) in enumerate(
            ((cfg.layer1, m.input_max), (cfg.layer2, 1)), start=1):
        if layer.v_th < 1:
            errs.append(f"layer{idx}.v_th must be >= 1")
        if layer.grad_win < 1:
            errs.append(f"layer{idx}.grad_win must be >= 1")
        if not (0.0 < layer.beta <= 1.0):
            errs.append(f"layer{idx}.beta must be in (0, 1]")
        if layer.eta_shift < 0 or layer.rho_shift < 0:
            errs.append(f"layer{idx} shifts must be >= 0")
        if not errs:
            pre, corr = _trace_bound(in_max, decay_shift(layer.beta), cfg.t_s)
            if pre > (1 << (m.t_pre_bits - 1)) - 1:
                errs.append(
                    f"layer{idx}: presynaptic trace can reach {pre}, beyond "
                    f"{m.t_pre_bits}-bit range; raise model.t_pre_bits")
            if cfg.trace_mode == "factored" and \
                    corr > (1 << (m.t_corr_bits - 1)) - 1:
                errs.append(
                    f"layer{idx}: correlation trace can reach {corr}, beyond "
                    f"{m.t_corr_bits}-bit range; the factored gradient "
                    "requires a non-saturating trace (raise "
                    "model.t_corr_bits or use trace_mode=explicit)")
    if errs:
        raise ConfigError("; ".join(errs))


def to_text(cfg: ExperimentConfig) -> str:
    """Canonical serialization; parse(to_text(cfg)) == cfg."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {
        "dataset": cfg.dataset,
        "arch": cfg.arch,
        "epochs": str(cfg.epochs),
        "batch_size": str(cfg.batch_size),
        "t_s": str(cfg.t_s),
        "alpha": str(cfg.alpha),
        "delta_max": str(cfg.delta_max),
        "seeds": (f"{cfg.seeds[0]}," if len(cfg.seeds) == 1
                  else ",".join(str(s) for s in cfg.seeds)),
        "trace_mode": cfg.trace_mode,
        "counting": cfg.counting,
        "update_timing": cfg.update_timing,
    }
    m = cfg.model
    parser["model"] = {
        "hidden": str(m.hidden), "inputs": str(m.inputs),
        "classes": str(m.classes),
        "shadow_bits": str(m.shadow_bits), "lp_bits": str(m.lp_bits),
        "v_bits": str(m.v_bits), "t_pre_bits": str(m.t_pre_bits),
        "t_corr_bits": str(m.t_corr_bits),
        "kernel": str(m.kernel), "out_channels": str(m.out_channels),
        "stride": str(m.stride), "padding": str(m.padding),
        "in_channels": str(m.in_channels), "in_height": str(m.in_height),
        "in_width": str(m.in_width),
    }
    for name, layer in (("layer1", cfg.layer1), ("layer2", cfg.layer2)):
        parser[name] = {
            "v_th": str(layer.v_th), "grad_win": str(layer.grad_win),
            "beta": repr(layer.beta), "eta_shift": str(layer.eta_shift),
            "rho_shift": str(layer.rho_shift),
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
