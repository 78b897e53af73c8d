"""Configuration records and the flat key-value config file format.

File format: one ``key = value`` per line, ``#`` starts a comment. Nested
records use dotted keys (``weights.beta = 0.5``, ``network.depth = 4``).
List values are comma separated (``reblur = 5,3,3,0.01,1``,
``network.encoder_channels = 16,32,64``). ``embedding = off`` disables the
refinement stage; any ``embedding.*`` key enables it.
"""

import dataclasses
import difflib
from dataclasses import dataclass, field
from typing import Optional


def _check_odd(name, value):
    if int(value) != value or value < 1 or value % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= 1, got {value}")


@dataclass(frozen=True)
class ReblurParams:
    """Parameter vector ``[k_g, k_d, k_e, t, f]`` of the focus measure."""

    k_g: int = 5
    k_d: int = 3
    k_e: int = 3
    t: float = 0.01
    f: bool = True

    def __post_init__(self):
        for name in ("k_g", "k_d", "k_e"):
            _check_odd(name, getattr(self, name))
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")

    @classmethod
    def parse(cls, text):
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 5:
            raise ValueError(f"reblur needs 5 comma-separated values k_g,k_d,k_e,t,f; got {text!r}")
        try:
            k_g, k_d, k_e = (float(p) for p in parts[:3])
            t = float(parts[3])
            f = _parse_bool(parts[4])
        except ValueError as exc:
            raise ValueError(f"bad reblur vector {text!r}: {exc}") from None
        for name, v in (("k_g", k_g), ("k_d", k_d), ("k_e", k_e)):
            if v != int(v):
                raise ValueError(f"{name} must be an integer, got {v}")
        return cls(int(k_g), int(k_d), int(k_e), t, f)

    def as_list(self):
        return [self.k_g, self.k_d, self.k_e, self.t, int(self.f)]


@dataclass(frozen=True)
class KernelEstConfig:
    """Spread-kernel estimation settings.

    ``lowpass_sigma`` is the width, in frequency bins, of the Gaussian
    smoothing applied to the spectral ratio. ``epsilon`` is the floor of
    the spectral regularizer in orthonormal-FFT power units and
    ``noise_scale`` multiplies the residual noise power added on top.
    """

    support: int = 21
    lowpass_sigma: float = 2.0
    epsilon: float = 1e-8
    noise_scale: float = 0.5

    def __post_init__(self):
        if self.support < 3 or self.support % 2 == 0:
            raise ValueError(f"support must be odd and >= 3, got {self.support}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lowpass_sigma < 0 or self.noise_scale < 0:
            raise ValueError("lowpass_sigma and noise_scale must be non-negative")


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = 5
    kernel_size: int = 5
    encoder_channels: tuple = (16, 32, 64, 128, 128)
    skip_channels: tuple = (4, 4, 4, 4, 4)
    use_split_conv: bool = False
    output_channels: int = 3
    leaky_slope: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        object.__setattr__(self, "skip_channels", tuple(int(c) for c in self.skip_channels))
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        _check_odd("kernel_size", self.kernel_size)
        if len(self.encoder_channels) != self.depth or len(self.skip_channels) != self.depth:
            raise ValueError("encoder_channels and skip_channels need one entry per depth level")
        if min(self.encoder_channels) < 1 or min(self.skip_channels) < 1 or self.output_channels < 1:
            raise ValueError("channel counts must be >= 1")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 1.0
    signed_grad_limit: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


@dataclass(frozen=True)
class EmbeddingConfig:
    iterations: int = 500
    binarize_threshold: float = 0.5
    learning_rate: float = 0.01
    seed: int = 0
    input_mode: str = "averaged_inputs"
    straight_through: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("embedding iterations must be >= 1")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.input_mode not in ("averaged_inputs", "noise"):
            raise ValueError("embedding input_mode must be 'averaged_inputs' or 'noise'")


@dataclass(frozen=True)
class FusionConfig:
    scale: int = 2
    iterations: int = 3000
    learning_rate: float = 0.01
    input_mode: str = "averaged_inputs"
    noise_perturb_sigma: float = 0.03
    weights: LossWeights = field(default_factory=LossWeights)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    reblur: ReblurParams = field(default_factory=ReblurParams)
    kernel_est: KernelEstConfig = field(default_factory=KernelEstConfig)
    embedding: Optional[EmbeddingConfig] = None
    downsample_method: str = "lanczos"
    seed: int = 0

    def __post_init__(self):
        if self.scale not in (1, 2, 4):
            raise ValueError(f"scale must be 1, 2 or 4, got {self.scale}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.input_mode not in ("averaged_inputs", "noise"):
            raise ValueError("input_mode must be 'averaged_inputs' or 'noise'")
        if self.noise_perturb_sigma < 0:
            raise ValueError("noise_perturb_sigma must be >= 0")
        if self.downsample_method not in ("bilinear", "bicubic", "lanczos"):
            raise ValueError("downsample_method must be bilinear, bicubic or lanczos")


# ---------------------------------------------------------------------------
# Flat key-value serialization
# ---------------------------------------------------------------------------

_NESTED = {
    "weights": LossWeights,
    "network": NetworkConfig,
    "kernel_est": KernelEstConfig,
    "embedding": EmbeddingConfig,
}


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _field_types(cls):
    return {f.name: f.default if f.default is not dataclasses.MISSING else f.default_factory()
            for f in dataclasses.fields(cls)}


def valid_keys():
    keys = []
    for f in dataclasses.fields(FusionConfig):
        if f.name in _NESTED:
            if f.name == "embedding":
                keys.append("embedding")
            keys.extend(f"{f.name}.{g.name}" for g in dataclasses.fields(_NESTED[f.name]))
        else:
            keys.append(f.name)
    return keys


def _convert(key, raw, default):
    try:
        if isinstance(default, bool):
            return _parse_bool(raw)
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError("expected an integer")
            return int(v)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in str(raw).split(",") if p.strip())
        return str(raw).strip()
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot use {raw!r} ({exc})") from None


def _unknown_key(key):
    keys = valid_keys()
    hint = difflib.get_close_matches(key, keys, n=1)
    msg = f"unknown config key {key!r}"
    if hint:
        msg += f"; did you mean {hint[0]!r}?"
    msg += " Valid keys: " + ", ".join(keys)
    return ValueError(msg)


def parse_config_text(text):
    """Parse config text into a ``{key: raw_string}`` mapping (no validation of keys)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def apply_overrides(cfg, overrides):
    """Return a new FusionConfig with raw string ``overrides`` applied."""
    top = {}
    nested = {name: {} for name in _NESTED}
    embedding_flag = None
    top_defaults = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(FusionConfig)}
    for key, raw in overrides.items():
        if key == "embedding":
            embedding_flag = _parse_bool(raw)
        elif key == "reblur":
            top["reblur"] = ReblurParams.parse(raw)
        elif "." in key:
            group, name = key.split(".", 1)
            if group not in _NESTED or name not in _field_types(_NESTED[group]):
                raise _unknown_key(key)
            nested[group][name] = raw
        elif key in top_defaults and key not in _NESTED:
            top[key] = _convert(key, raw, top_defaults[key])
        else:
            raise _unknown_key(key)

    updates = dict(top)
    for group, raw_values in nested.items():
        current = getattr(cfg, group)
        if group == "embedding":
            if embedding_flag is False:
                continue
            if current is None and (raw_values or embedding_flag):
                current = EmbeddingConfig()
            if current is None:
                continue
        defaults = _field_types(_NESTED[group])
        if raw_values:
            changes = {k: _convert(f"{group}.{k}", v, defaults[k]) for k, v in raw_values.items()}
            current = dataclasses.replace(current, **changes)
        updates[group] = current
    if embedding_flag is False:
        updates["embedding"] = None
    return dataclasses.replace(cfg, **updates)


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (highest precedence)."""
    cfg = FusionConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            cfg = apply_overrides(cfg, parse_config_text(fh.read()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def flatten_config(cfg):
    """Fully resolved config as an ordered list of ``(key, value_string)``."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    items = []
    for f in dataclasses.fields(FusionConfig):
        value = getattr(cfg, f.name)
        if f.name == "reblur":
            items.append(("reblur", ",".join(fmt(v) for v in (value.k_g, value.k_d, value.k_e, value.t)) +
                          f",{int(value.f)}"))
        elif f.name in _NESTED:
            if value is None:
                items.append((f.name, "off"))
                continue
            if f.name == "embedding":
                items.append(("embedding", "on"))
            for g in dataclasses.fields(value):
                items.append((f"{f.name}.{g.name}", fmt(getattr(value, g.name))))
        else:
            items.append((f.name, fmt(value)))
    return items
