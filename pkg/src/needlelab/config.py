"""Run configuration: ``key = value`` grammar, validation and initial-data presets."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from types import SimpleNamespace

import numpy as np

from .evolution import EvolveConfig
from .operators import Background, PhysicsParams, flat_background, ivantsov_background
from .spectral import MAX_N, MIN_N, RealField, SpectralGrid, random_bandlimited

DEFAULT_OUT_DIR = "needlelab_out"
INIT_KINDS = {"single_mode": 2, "gaussian_bump": 3, "random_bandlimited": 2}


class ConfigError(ValueError):
    """Malformed, unknown or out-of-range configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    n: int = 256
    length: float = 40.0
    tau: float = 1.0
    gamma: float = 0.0
    epsilon: float = 0.0
    dt: float = 1e-4
    t_final: float = 0.1
    s: int = 5
    scheme: str = "imex"
    background: str = "flat"
    window_inner_fraction: float = 0.6
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    output_stride: int = 1
    out_dir: str = ""
    seed: int = 0
    init: str = "single_mode 1 0.001"

    def __post_init__(self):
        problems = _range_problems(self) + _cross_problems(self)
        if problems:
            raise ConfigError("; ".join(problems))

    def resolved_out_dir(self, override: str | None = None) -> str:
        return override or self.out_dir or os.environ.get("NCL_OUT_DIR") or DEFAULT_OUT_DIR

    # builders ---------------------------------------------------------------

    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.n, self.length)

    def params(self) -> PhysicsParams:
        return PhysicsParams(self.tau, self.gamma, self.epsilon)

    def background_for(self, grid: SpectralGrid) -> Background:
        if self.background == "ivantsov":
            return ivantsov_background(grid, self.window_inner_fraction)
        return flat_background(grid)

    def evolve_config(self, grid: SpectralGrid | None = None, **overrides) -> EvolveConfig:
        g = grid or self.grid()
        cfg = EvolveConfig(self.params(), self.background_for(g), s=self.s, dt=self.dt,
                           t_final=self.t_final, scheme=self.scheme, picard_tol=self.picard_tol,
                           picard_max_iter=self.picard_max_iter,
                           output_stride=self.output_stride)
        return replace(cfg, **overrides) if overrides else cfg

    def initial_field(self, grid: SpectralGrid | None = None) -> RealField:
        return make_initial(grid or self.grid(), self.init, self.seed)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _range_problems(c: RunConfig) -> list[str]:
    out = []
    if not (MIN_N <= c.n <= MAX_N and c.n % 2 == 0):
        out.append(f"n must be even in [{MIN_N}, {MAX_N}], got {c.n}")
    for name in ("length", "tau", "dt", "t_final", "picard_tol"):
        v = getattr(c, name)
        if not (np.isfinite(v) and v > 0):
            out.append(f"{name} must be positive, got {v}")
    if not 0.0 <= c.gamma < 1.0:
        out.append(f"gamma must lie in [0, 1) so that tau*(1-gamma) > 0, got {c.gamma}")
    if not (np.isfinite(c.epsilon) and c.epsilon >= 0):
        out.append(f"epsilon must be nonnegative, got {c.epsilon}")
    if c.s < 0:
        out.append(f"s must be a nonnegative integer, got {c.s}")
    if c.scheme not in ("imex", "picard"):
        out.append(f"scheme must be imex or picard, got {c.scheme!r}")
    if c.background not in ("flat", "ivantsov"):
        out.append(f"background must be flat or ivantsov, got {c.background!r}")
    if not 0.0 < c.window_inner_fraction <= 0.8:
        out.append(f"window_inner_fraction must lie in (0, 0.8], got {c.window_inner_fraction}")
    if c.picard_max_iter < 1:
        out.append(f"picard_max_iter must be at least 1, got {c.picard_max_iter}")
    if c.output_stride < 1:
        out.append(f"output_stride must be at least 1, got {c.output_stride}")
    if c.seed < 0:
        out.append(f"seed must be nonnegative, got {c.seed}")
    try:
        parse_init(c.init)
    except ConfigError as exc:
        out.append(str(exc))
    return out


def _cross_problems(c: RunConfig) -> list[str]:
    if c.t_final > 0 and c.dt > c.t_final:
        return [f"dt={c.dt} exceeds t_final={c.t_final}"]
    return []


def parse_init(preset: str) -> tuple[str, list[float]]:
    parts = preset.split()
    if not parts or parts[0] not in INIT_KINDS:
        raise ConfigError(f"init must start with one of {sorted(INIT_KINDS)}, got {preset!r}")
    kind, args = parts[0], parts[1:]
    if len(args) != INIT_KINDS[kind]:
        raise ConfigError(f"init {kind} takes {INIT_KINDS[kind]} numbers, got {len(args)}")
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise ConfigError(f"init arguments must be numbers: {preset!r}") from None
    if not all(np.isfinite(values)):
        raise ConfigError(f"init arguments must be finite: {preset!r}")
    if kind in ("single_mode", "random_bandlimited") and (values[0] < 1 or not values[0].is_integer()):
        raise ConfigError(f"{kind} needs a positive integer wavenumber, got {args[0]}")
    if kind == "gaussian_bump" and values[1] <= 0:
        raise ConfigError(f"gaussian_bump width must be positive, got {args[1]}")
    return kind, values


def make_initial(grid: SpectralGrid, preset: str, seed: int = 0) -> RealField:
    """Initial field from a preset string.

    ``single_mode k a`` is ``a sin(2 pi k xi / L)``; ``gaussian_bump a w c`` is
    ``a exp(-((xi - c) / w)^2)``; ``random_bandlimited kmax a`` draws modes
    ``1..kmax`` from ``default_rng(seed)``.
    """
    kind, v = parse_init(preset)
    xi = grid.nodes
    if kind == "single_mode":
        k, amp = int(v[0]), v[1]
        if k >= grid.n // 2:
            raise ConfigError(f"single_mode k={k} is not resolved on n={grid.n}")
        return RealField(grid, amp * np.sin(2 * np.pi * k * xi / grid.length))
    if kind == "gaussian_bump":
        amp, width, centre = v
        return RealField(grid, amp * np.exp(-(((xi - centre) / width) ** 2)))
    kmax, amp = int(v[0]), v[1]
    return random_bandlimited(grid, kmax, np.random.default_rng(seed), amplitude=amp)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_DEFAULTS = RunConfig().to_dict()


def _coerce(key: str, raw) -> object:
    kind = _TYPES[key]
    if kind == "int":
        if isinstance(raw, bool):
            raise ValueError
        if isinstance(raw, (int, np.integer)):
            return int(raw)
        value = float(raw)
        if not value.is_integer():
            raise ValueError
        return int(value)
    if kind == "float":
        if isinstance(raw, bool):
            raise ValueError
        return float(raw)
    if raw is None:
        return ""
    return str(raw).strip()


def config_from_mapping(entries) -> RunConfig:
    """Validated config from ``(line_no, line, key, value)`` entries."""
    values, lines = {}, {}
    for line_no, line, key, raw in entries:
        where = f"line {line_no}: {line!r}"
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r} at {where}")
        if key in values:
            raise ConfigError(f"duplicate key {key!r} at {where}")
        try:
            values[key] = _coerce(key, raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key} at {where}") from None
        problems = _range_problems(SimpleNamespace(**{**_DEFAULTS, key: values[key]}))
        if problems:
            raise ConfigError(f"{'; '.join(problems)} at {where}")
        lines[key] = where
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        where = lines.get("dt", lines.get("t_final", "defaults"))
        raise ConfigError(f"{exc} at {where}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment).

    A ``run.json`` written by :func:`needlelab.diagnostics.emit_outputs` is
    accepted too; its ``config`` object is read back.
    """
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config at line {exc.lineno}: {exc.msg}") from None
        body = doc.get("config", doc) if isinstance(doc, dict) else None
        if not isinstance(body, dict):
            raise ConfigError("JSON config must be an object")
        return config_from_mapping((1, f"{k}: {v!r}", k, v) for k, v in body.items())
    entries = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or (not value and key != "out_dir"):
            raise ConfigError(f"malformed line {line_no}: {line!r} (expected key = value)")
        entries.append((line_no, line, key, value))
    return config_from_mapping(entries)


def emit_config(config: RunConfig) -> str:
    """Text form that :func:`parse_config` reads back to an equal config."""
    lines = []
    for key, value in config.to_dict().items():
        lines.append(f"{key} = {repr(value) if isinstance(value, float) else value}")
    return "\n".join(lines) + "\n"


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text)
