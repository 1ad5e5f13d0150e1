"""Run configuration: JSON ingestion, flag overrides and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .core import Observable, PPSPair
from .errors import ConfigError
from .oracle import GridSpec
from .qubit import BlochAngles, pps_from_angles

MODELS = ("generic", "qubit", "stern-gerlach")
FORMATS = ("csv", "json")
SPACINGS = ("log", "linear")


@dataclass(frozen=True)
class GRange:
    start: float
    stop: float
    steps: int
    spacing: str = "log"

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.steps)
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class RunConfig:
    model: str = "stern-gerlach"
    eigenvalues: tuple[float, ...] = (1.0, -1.0)
    alpha: tuple[complex, ...] | None = None
    beta: tuple[complex, ...] | None = None
    pre: BlochAngles | None = None
    post: BlochAngles | None = None
    delta: float = 1.0
    g: float | None = None
    g_range: GRange | None = None
    theta_steps: int = 181
    phi_steps: int = 360
    n: int = 1
    grid: GridSpec = field(default_factory=GridSpec)
    out: str | None = None
    format: str = "csv"

    def observable(self) -> Observable:
        return Observable(self.eigenvalues)

    def pps(self) -> PPSPair:
        if self.model == "stern-gerlach":
            pre = self.pre or BlochAngles(math.pi / 2, 0.0)
            return pps_from_angles(pre, BlochAngles(math.pi / 2, 0.0))
        if self.pre is not None:
            return pps_from_angles(self.pre, self.post)
        if self.alpha is None:
            raise ConfigError("pre/postselected states are required", field="pps")
        return PPSPair(np.array(self.alpha), np.array(self.beta))

    def require_g(self) -> float:
        if self.g is None:
            raise ConfigError("a coupling strength is required", field="g")
        return self.g


def load_json(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    return raw


def _number(value, name: str, *, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", field=name)
    if positive and value <= 0:
        raise ConfigError("must be positive", field=name)
    if nonneg and value < 0:
        raise ConfigError("must be non-negative", field=name)
    return value


def _integer(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=name)
    if value < minimum:
        raise ConfigError(f"must be at least {minimum}", field=name)
    return value


def _complex(value, name: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError("complex entries are [re, im] pairs", field=name)
        return complex(_number(value[0], name), _number(value[1], name))
    return complex(_number(value, name))


def _angle_scale(raw: dict, name: str) -> float:
    unit = raw.get("unit", "rad")
    if unit not in ("rad", "deg"):
        raise ConfigError(f"unit must be 'rad' or 'deg', got {unit!r}", field=name)
    return math.pi / 180 if unit == "deg" else 1.0


def _angles(raw, name: str, scale: float) -> BlochAngles:
    if not isinstance(raw, dict) or "theta" not in raw:
        raise ConfigError("expected an object with 'theta' and optional 'phi'", field=name)
    theta = _number(raw["theta"], f"{name}.theta") * scale
    phi = _number(raw.get("phi", 0.0), f"{name}.phi") * scale
    try:
        return BlochAngles(theta, phi)
    except ValueError as exc:
        raise ConfigError(str(exc), field=name) from exc


def _state(raw, name: str) -> tuple[complex, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a nonempty list of amplitudes", field=name)
    vec = np.array([_complex(v, f"{name}[{i}]") for i, v in enumerate(raw)])
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ConfigError("state vector is zero", field=name)
    if abs(norm - 1.0) > 1e-12:
        raise ConfigError(f"state is not normalized (norm {norm:.15g})", field=name)
    return tuple(vec)


_KNOWN = {
    "model", "observable", "pps", "delta", "g", "g_range", "scan", "n", "grid", "output",
}


def build_config(raw: dict[str, Any] | None = None, **overrides) -> RunConfig:
    """Validate a raw JSON mapping and apply command-line overrides (``None`` values are ignored)."""
    raw = dict(raw or {})
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}", field=unknown[0])
    cfg: dict[str, Any] = {}

    model = raw.get("model", "stern-gerlach")
    if model not in MODELS:
        raise ConfigError(f"must be one of {MODELS}, got {model!r}", field="model")
    cfg["model"] = model

    if "observable" in raw:
        obs = raw["observable"]
        if not isinstance(obs, list) or not obs:
            raise ConfigError("expected a nonempty list of eigenvalues", field="observable")
        cfg["eigenvalues"] = tuple(_number(v, f"observable[{i}]") for i, v in enumerate(obs))
    eig = cfg.get("eigenvalues", (1.0, -1.0))
    if model in ("qubit", "stern-gerlach") and len(eig) != 2:
        raise ConfigError(f"model {model!r} needs exactly two eigenvalues", field="observable")
    if model == "stern-gerlach" and tuple(eig) != (1.0, -1.0):
        raise ConfigError("the Stern-Gerlach model fixes the observable to [1, -1]", field="observable")

    pps = raw.get("pps")
    if pps is not None:
        if not isinstance(pps, dict):
            raise ConfigError("expected an object", field="pps")
        scale = _angle_scale(pps, "pps.unit")
        if "pre" in pps:
            if len(eig) != 2:
                raise ConfigError("Bloch angles are only meaningful for two-level systems", field="pps.pre")
            cfg["pre"] = _angles(pps["pre"], "pps.pre", scale)
            if model != "stern-gerlach":
                if "post" not in pps:
                    raise ConfigError("missing postselected angles", field="pps.post")
                cfg["post"] = _angles(pps["post"], "pps.post", scale)
            elif "post" in pps:
                raise ConfigError("the Stern-Gerlach postselection is fixed along +x", field="pps.post")
        elif "alpha" in pps or "beta" in pps:
            if model == "stern-gerlach":
                raise ConfigError("Stern-Gerlach preselection is given as Bloch angles", field="pps")
            for key in ("alpha", "beta"):
                if key not in pps:
                    raise ConfigError("missing amplitudes", field=f"pps.{key}")
                vec = _state(pps[key], f"pps.{key}")
                if len(vec) != len(eig):
                    raise ConfigError(
                        f"has {len(vec)} components but the observable has {len(eig)}", field=f"pps.{key}"
                    )
                cfg[key] = vec
        else:
            raise ConfigError("give either 'pre'/'post' angles or 'alpha'/'beta' amplitudes", field="pps")

    if "delta" in raw:
        cfg["delta"] = _number(raw["delta"], "delta", positive=True)
    if "g" in raw:
        cfg["g"] = _number(raw["g"], "g", nonneg=True)
    if "g_range" in raw:
        gr = raw["g_range"]
        if not isinstance(gr, dict):
            raise ConfigError("expected an object", field="g_range")
        spacing = gr.get("spacing", "log")
        if spacing not in SPACINGS:
            raise ConfigError(f"must be one of {SPACINGS}", field="g_range.spacing")
        start = _number(gr.get("start"), "g_range.start", positive=True)
        stop = _number(gr.get("stop"), "g_range.stop", positive=True)
        if stop <= start:
            raise ConfigError("stop must exceed start", field="g_range.stop")
        cfg["g_range"] = GRange(start, stop, _integer(gr.get("steps"), "g_range.steps", 2), spacing)
    if "scan" in raw:
        scan = raw["scan"]
        if not isinstance(scan, dict):
            raise ConfigError("expected an object", field="scan")
        if "theta_steps" in scan:
            cfg["theta_steps"] = _integer(scan["theta_steps"], "scan.theta_steps", 2)
        if "phi_steps" in scan:
            cfg["phi_steps"] = _integer(scan["phi_steps"], "scan.phi_steps", 1)
    if "n" in raw:
        cfg["n"] = _integer(raw["n"], "n", 1)
    if "grid" in raw:
        grid = raw["grid"]
        if not isinstance(grid, dict):
            raise ConfigError("expected an object", field="grid")
        points = _integer(grid.get("points", 32769), "grid.points", 1025)
        if points % 2 == 0:
            raise ConfigError("must be odd so that q = 0 is a grid node", field="grid.points")
        try:
            cfg["grid"] = GridSpec(
                half_width_sigmas=_number(grid.get("half_width_sigmas", 12.0), "grid.half_width_sigmas"),
                points=points,
            )
        except ValueError as exc:
            raise ConfigError(str(exc), field="grid") from exc
    if "output" in raw:
        output = raw["output"]
        if not isinstance(output, dict):
            raise ConfigError("expected an object", field="output")
        if "path" in output:
            cfg["out"] = str(output["path"])
        if "format" in output:
            cfg["format"] = output["format"]

    config = RunConfig(**cfg)
    config = _apply_overrides(config, overrides)
    if config.format not in FORMATS:
        raise ConfigError(f"must be one of {FORMATS}", field="format")
    if config.model == "generic" and config.pre is None and config.alpha is None and pps is not None:
        raise ConfigError("no states given", field="pps")
    return config


def _apply_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    changes = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "g":
            changes["g"] = _number(value, "--g", nonneg=True)
        elif key == "delta":
            changes["delta"] = _number(value, "--delta", positive=True)
        elif key == "theta_steps":
            changes["theta_steps"] = _integer(value, "--theta-steps", 2)
        elif key == "phi_steps":
            changes["phi_steps"] = _integer(value, "--phi-steps", 1)
        elif key in ("out", "format"):
            changes[key] = value
        else:
            raise ConfigError(f"unsupported override {key!r}")
    return replace(config, **changes)
