"""Experiment configuration: an INI file with one section per concern.

Example::

    [model]
    d = 2
    T = 20
    gamma = 0.3
    seed = 7

    [kernel]
    variant = logistic
    intercept = 1.0
    distance_slope = 0.5
    persistence = 1.0

    [experiment]
    n_grid = 50, 200, 800
    replicates = 20

Unset fields fall back to the selected preset.  Without a preset, ``gamma``
must be given explicitly; everything else defaults to the ``paper`` preset.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

from .kernels import KernelSpec, kernel_from_dict, kernel_to_dict, logistic_kernel
from .particle import InitialLaw, ModelConfig, NoiseSpec

__all__ = [
    "ConfigError",
    "STATISTICS",
    "PRESETS",
    "ExperimentConfig",
    "preset",
    "parse_config",
    "load_config",
    "serialize_config",
    "config_hash",
]

STATISTICS = ("mse", "symdiff", "triangle", "lambda2", "hydro", "cond_chaos", "multigraphon")
NETWORK_FORMATS = ("none", "binary", "edgelist")
TRAJECTORY_FORMATS = ("none", "binary", "csv")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section/field."""


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 2
    T: int = 100
    gamma: float = 0.3
    seed: int = 0
    kernel: KernelSpec = field(default_factory=logistic_kernel)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    init: InitialLaw = field(default_factory=InitialLaw)
    n_grid: tuple[int, ...] = (10, 20, 50, 100, 200, 500, 1000)
    replicates: int = 100
    reference_N: int = 4000
    iterations: int = 100
    burn_in: int = 20
    statistics: tuple[str, ...] = ("mse", "symdiff", "triangle", "lambda2")
    graphon_samples: int = 20000
    output_dir: str = "coevo_out"
    trajectories: str = "csv"
    networks: str = "none"
    preset: str | None = None

    def __post_init__(self):
        if not self.n_grid:
            raise ConfigError("[experiment] n_grid must be nonempty")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("[experiment] n_grid entries must be positive")
        if self.replicates < 1:
            raise ConfigError("[experiment] replicates must be >= 1")
        if self.reference_N < 2:
            raise ConfigError("[experiment] reference_N must be >= 2")
        if self.iterations < 0:
            raise ConfigError("[experiment] iterations must be >= 0")
        if self.graphon_samples < 1:
            raise ConfigError("[experiment] graphon_samples must be >= 1")
        if self.burn_in < 0 or (self.burn_in >= self.T and self.burn_in > 0):
            raise ConfigError(f"[experiment] burn_in={self.burn_in} must be < T={self.T}")
        bad = [s for s in self.statistics if s not in STATISTICS]
        if bad:
            raise ConfigError(f"[experiment] unknown statistics {bad}; choose from {STATISTICS}")
        if self.networks not in NETWORK_FORMATS:
            raise ConfigError(f"[output] networks must be one of {NETWORK_FORMATS}")
        if self.trajectories not in TRAJECTORY_FORMATS:
            raise ConfigError(f"[output] trajectories must be one of {TRAJECTORY_FORMATS}")
        try:
            self.model(self.n_grid[0])
        except ValueError as exc:
            raise ConfigError(f"[model] {exc}") from exc

    def model(self, n: int) -> ModelConfig:
        return ModelConfig(n=n, d=self.d, T=self.T, gamma=self.gamma, kernel=self.kernel,
                           noise=self.noise, seed=self.seed)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


PRESETS: dict[str, ExperimentConfig] = {
    "paper": ExperimentConfig(preset="paper"),
    "desk": ExperimentConfig(T=20, n_grid=(50, 200, 800), replicates=20, reference_N=1000,
                             iterations=10, burn_in=5, preset="desk"),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


_MODEL_KEYS = {"d": int, "T": int, "gamma": float, "seed": int}
_EXPERIMENT_KEYS = {"replicates": int, "reference_N": int, "iterations": int, "burn_in": int,
                    "graphon_samples": int}


def _ints(text: str, where: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected a list of integers, got {text!r}") from None


def _convert(section: str, key: str, raw: str, typ):
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str, preset_name: str | None = None, source: str = "<string>") -> ExperimentConfig:
    """Parse INI text on top of a preset (or the ``paper`` preset defaults)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive ("T" vs "t")
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: expected a [section] header") from exc
    except configparser.ParsingError as exc:
        where = ", ".join(f"line {lineno}: {line.strip()!r}" for lineno, line in exc.errors)
        raise ConfigError(f"{source}, syntax error at {where}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {"model", "kernel", "noise", "init", "experiment", "output"}
    unknown = [s for s in cp.sections() if s not in known]
    if unknown:
        raise ConfigError(f"{source}: unknown sections {unknown}")

    if preset_name is None and cp.has_option("experiment", "preset"):
        preset_name = cp.get("experiment", "preset")
    base = preset(preset_name) if preset_name else ExperimentConfig()
    changes: dict = {"preset": preset_name}

    model = cp["model"] if cp.has_section("model") else {}
    if preset_name is None and "gamma" not in model:
        raise ConfigError(f"{source}: [model] gamma is required (or select a preset)")
    for key, raw in model.items():
        if key not in _MODEL_KEYS:
            raise ConfigError(f"[model] unknown field {key!r}")
        changes[key] = _convert("model", key, raw, _MODEL_KEYS[key])

    if cp.has_section("kernel"):
        spec = dict(cp["kernel"])
        for key in list(spec):
            if key not in ("variant", "regime"):
                spec[key] = _convert("kernel", key, spec[key], float)
        try:
            changes["kernel"] = kernel_from_dict(spec)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[kernel] {exc}") from exc

    if cp.has_section("noise"):
        sec = cp["noise"]
        kind = sec.get("kind", base.noise.kind)
        sigma = _convert("noise", "sigma", sec.get("sigma", str(base.noise.sigma)), float)
        extra = set(sec) - {"kind", "sigma"}
        if extra:
            raise ConfigError(f"[noise] unknown fields {sorted(extra)}")
        try:
            changes["noise"] = NoiseSpec(kind, sigma)
        except ValueError as exc:
            raise ConfigError(f"[noise] {exc}") from exc

    if cp.has_section("init"):
        sec = cp["init"]
        extra = set(sec) - {"mean", "scale"}
        if extra:
            raise ConfigError(f"[init] unknown fields {sorted(extra)}")
        mean = base.init.mean
        if "mean" in sec:
            try:
                vals = tuple(float(x) for x in sec["mean"].replace(",", " ").split())
            except ValueError:
                raise ConfigError(f"[init] mean: cannot parse {sec['mean']!r}") from None
            mean = vals[0] if len(vals) == 1 else vals
        scale = _convert("init", "scale", sec.get("scale", str(base.init.scale)), float)
        try:
            changes["init"] = InitialLaw(mean, scale)
        except ValueError as exc:
            raise ConfigError(f"[init] {exc}") from exc

    if cp.has_section("experiment"):
        for key, raw in cp["experiment"].items():
            if key == "preset":
                continue
            if key == "n_grid":
                changes["n_grid"] = _ints(raw, "[experiment] n_grid")
            elif key == "statistics":
                changes["statistics"] = tuple(s for s in raw.replace(",", " ").split())
            elif key in _EXPERIMENT_KEYS:
                changes[key] = _convert("experiment", key, raw, _EXPERIMENT_KEYS[key])
            else:
                raise ConfigError(f"[experiment] unknown field {key!r}")

    if cp.has_section("output"):
        for key, raw in cp["output"].items():
            if key == "dir":
                changes["output_dir"] = raw
            elif key in ("networks", "trajectories"):
                changes[key] = raw
            else:
                raise ConfigError(f"[output] unknown field {key!r}")

    try:
        return replace(base, **changes)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, preset_name: str | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, preset_name, source=str(p))


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text; ``parse_config(serialize_config(c)) == c`` for serializable kernels."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["model"] = {"d": str(cfg.d), "T": str(cfg.T), "gamma": repr(cfg.gamma), "seed": str(cfg.seed)}
    cp["kernel"] = {k: (v if isinstance(v, str) else repr(float(v)))
                    for k, v in kernel_to_dict(cfg.kernel).items()}
    cp["noise"] = {"kind": cfg.noise.kind, "sigma": repr(float(cfg.noise.sigma))}
    mean = cfg.init.mean
    mean_text = ", ".join(repr(float(x)) for x in mean) if isinstance(mean, tuple) else repr(float(mean))
    cp["init"] = {"mean": mean_text, "scale": repr(float(cfg.init.scale))}
    exp = {"n_grid": ", ".join(map(str, cfg.n_grid)),
           "replicates": str(cfg.replicates), "reference_N": str(cfg.reference_N),
           "iterations": str(cfg.iterations), "burn_in": str(cfg.burn_in),
           "statistics": ", ".join(cfg.statistics), "graphon_samples": str(cfg.graphon_samples)}
    if cfg.preset:
        exp["preset"] = cfg.preset
    cp["experiment"] = exp
    cp["output"] = {"dir": cfg.output_dir, "trajectories": cfg.trajectories,
                    "networks": cfg.networks}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
