"""Parameter scans over the Bloch sphere and over g, plus simplex refinement of grid maxima."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize

from . import __version__
from .config import RunConfig
from .errors import NoConvergence, PPSError
from .metrics import sg_metric_arrays
from .qubit import qubit_readout_arrays
from .stern_gerlach import sg_momentum_max, sg_position_max, sg_readout_arrays

READOUT_COLUMNS = ("P", "dp", "dz", "sd_p", "sd_z")
METRIC_COLUMNS = ("ip_1", "iz_1", "ip_2", "iz_2", "ep_1", "ez_1", "ep_2", "ez_2")
G_COLUMNS = (
    "dp_max", "dp_max_over_g", "dz_max", "dz_max_over_delta",
    "p_max", "p_max_over_2d2g2", "theta_opt_p", "phi_opt_z",
)


def worker_count() -> int:
    """Size of the work pool; ``PPSMETER_THREADS`` caps it."""
    cap = os.environ.get("PPSMETER_THREADS")
    default = min(8, os.cpu_count() or 1)
    if cap is None:
        return default
    try:
        return max(1, int(cap))
    except ValueError:
        return default


@dataclass
class ScanTable:
    """Rectangular grid of evaluated points, one row per grid point in axis-major order."""

    axes: list[tuple[str, np.ndarray]]
    columns: list[str]
    data: dict[str, np.ndarray]
    errors: list[str]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.errors)

    def axis_values(self) -> list[np.ndarray]:
        grids = np.meshgrid(*(values for _, values in self.axes), indexing="ij")
        return [g.ravel() for g in grids]

    def argmax(self, column: str) -> tuple[int, float]:
        """Index and value of the first row attaining the column maximum (error rows skipped)."""
        values = self.data[column]
        if np.all(np.isnan(values)):
            raise ValueError(f"column {column!r} has no valid rows")
        idx = int(np.nanargmax(values))
        return idx, float(values[idx])

    def argmax_report(self) -> dict[str, dict]:
        names = [name for name, _ in self.axes]
        coords = self.axis_values()
        report = {}
        for col in self.columns:
            if np.all(np.isnan(self.data[col])):
                continue
            idx, value = self.argmax(col)
            report[col] = {"row": idx, "value": value, **{n: float(c[idx]) for n, c in zip(names, coords)}}
        return report

    def to_csv(self) -> str:
        names = [name for name, _ in self.axes]
        coords = self.axis_values()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names + self.columns + ["error"])
        for i, err in enumerate(self.errors):
            row = [_fmt(c[i]) for c in coords]
            row += ["" if err else _fmt(self.data[col][i]) for col in self.columns]
            writer.writerow(row + [err])
        return buf.getvalue()

    def to_json(self) -> str:
        names = [name for name, _ in self.axes]
        coords = self.axis_values()
        rows = []
        for i, err in enumerate(self.errors):
            row = {n: float(c[i]) for n, c in zip(names, coords)}
            for col in self.columns:
                v = self.data[col][i]
                row[col] = None if err or math.isnan(v) else float(v)
            row["error"] = err or None
            rows.append(row)
        envelope = {
            "metadata": self.metadata,
            "axes": {n: [float(v) for v in values] for n, values in self.axes},
            "columns": self.columns,
            "argmax": self.argmax_report(),
            "rows": rows,
        }
        return json.dumps(envelope, indent=1, allow_nan=False)


def _fmt(value) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _metadata(config: RunConfig, model_id: str) -> dict:
    return {
        "model": model_id,
        "delta": config.delta,
        "g": config.g,
        "g_range": None if config.g_range is None else vars(config.g_range),
        "tool": "ppsmeter",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def angle_axes(config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """theta on [0, pi] inclusive, phi on [0, 2 pi) exclusive."""
    theta = np.linspace(0.0, math.pi, config.theta_steps)
    phi = np.arange(config.phi_steps) * (2 * math.pi / config.phi_steps)
    return theta, phi


def _sg_row_block(theta_row: np.ndarray, phi: np.ndarray, delta: float, g: float, columns) -> dict:
    th, ph = np.meshgrid(theta_row, phi, indexing="ij")
    out = {}
    if any(c in READOUT_COLUMNS for c in columns):
        r = sg_readout_arrays(th, ph, delta, g)
        out.update({"P": r["P"], "dp": r["dp"], "dz": r["dz"], "sd_p": r["sd_p"], "sd_z": r["sd_z"]})
    if any(c in METRIC_COLUMNS for c in columns):
        out.update(sg_metric_arrays(th, ph, delta, g))
    return {c: out[c].ravel() for c in columns}


def _evaluate_block(theta_row, phi, delta, g, columns):
    try:
        block = _sg_row_block(theta_row, phi, delta, g, columns)
        errs = ["VanishingPostselection" if math.isnan(block[columns[0]][i]) else "" for i in range(len(block[columns[0]]))]
        return block, errs
    except PPSError:
        # fall back to point-by-point so one bad point does not poison its block
        rows = {c: [] for c in columns}
        errs = []
        for t in theta_row:
            for p in phi:
                try:
                    point = _sg_row_block(np.array([t]), np.array([p]), delta, g, columns)
                    bad = math.isnan(point[columns[0]][0])
                    errs.append("VanishingPostselection" if bad else "")
                    for c in columns:
                        rows[c].append(point[c][0])
                except PPSError as exc:
                    errs.append(type(exc).__name__)
                    for c in columns:
                        rows[c].append(math.nan)
        return {c: np.array(v) for c, v in rows.items()}, errs


def scan_angles(config: RunConfig, columns: Sequence[str] = READOUT_COLUMNS + METRIC_COLUMNS) -> ScanTable:
    """Evaluate the Stern-Gerlach readout and metric closed forms on a (theta, phi) grid.

    Rows are theta-major.  Points where postselection fails carry the
    exception name in the ``error`` column and NaN data.
    """
    columns = list(columns)
    g = config.require_g()
    theta, phi = angle_axes(config)
    blocks = np.array_split(theta, min(len(theta), 4 * worker_count()))
    blocks = [b for b in blocks if b.size]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(lambda b: _evaluate_block(b, phi, config.delta, g, columns), blocks))
    data = {c: np.concatenate([r[0][c] for r in results]) for c in columns}
    errors = [e for r in results for e in r[1]]
    for c in columns:
        data[c] = np.where([bool(e) for e in errors], np.nan, data[c])
    return ScanTable(
        axes=[("theta", theta), ("phi", phi)],
        columns=columns,
        data=data,
        errors=errors,
        metadata=_metadata(config, "stern-gerlach"),
    )


def scan_g(config: RunConfig) -> ScanTable:
    """Closed-form Stern-Gerlach maxima and their probability over a range of g."""
    if config.g_range is None:
        raise ValueError("scan_g needs a g_range")
    gs = config.g_range.values()
    delta = config.delta
    data = {c: np.empty(gs.size) for c in G_COLUMNS}
    errors = []
    for i, g in enumerate(gs):
        try:
            mp, mz = sg_momentum_max(delta, g), sg_position_max(delta, g)
        except (PPSError, ValueError) as exc:
            errors.append(type(exc).__name__)
            for c in G_COLUMNS:
                data[c][i] = math.nan
            continue
        errors.append("")
        data["dp_max"][i] = mp.dp_max
        data["dp_max_over_g"][i] = mp.dp_max / g
        data["dz_max"][i] = mp.dz_max
        data["dz_max_over_delta"][i] = mp.dz_max / delta
        data["p_max"][i] = mp.p_max
        data["p_max_over_2d2g2"][i] = mp.p_max / (2 * delta**2 * g**2)
        data["theta_opt_p"][i] = mp.theta_opt
        data["phi_opt_z"][i] = mz.phi_opt
    return ScanTable(
        axes=[("g", gs)],
        columns=list(G_COLUMNS),
        data=data,
        errors=errors,
        metadata=_metadata(config, "stern-gerlach"),
    )


# ---------------------------------------------------------------- refinement


@dataclass(frozen=True)
class Objective:
    """A scalar field to maximize over a box of angles."""

    name: str
    variables: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]
    evaluate: Callable[..., np.ndarray]  # (*angle_arrays, **params) -> values, NaN where undefined


_SG_BOUNDS = ((0.0, math.pi), (0.0, 2 * math.pi))
_QUBIT_BOUNDS = ((0.0, math.pi), (0.0, 2 * math.pi), (0.0, math.pi), (0.0, 2 * math.pi))


def _sg_field(key):
    if key in ("dp", "dz", "P", "sd_p", "sd_z"):
        return lambda theta, phi, delta, g: sg_readout_arrays(theta, phi, delta, g)[key]
    return lambda theta, phi, delta, g: sg_metric_arrays(theta, phi, delta, g)[key]


def _qubit_field(key):
    def evaluate(theta1, phi1, theta2, phi2, delta, g, a1=1.0, a2=-1.0):
        r = qubit_readout_arrays(a1, a2, theta1, phi1, theta2, phi2, delta, g)
        if key in r:
            return r[key]
        signal_max = max(abs(a1), abs(a2)) * g
        ref = 0.5 / delta
        with np.errstate(invalid="ignore", divide="ignore"):
            if key.startswith("ip"):
                value = ref * np.abs(r["dp"]) / (r["sd_p"] * signal_max)
            else:
                value = ref * np.abs(r["dq"]) / (r["sd_q"] * signal_max)
        return value * np.sqrt(r["P"]) if key.endswith("_1") else value

    return evaluate


OBJECTIVES: dict[str, Objective] = {}
for _key in ("dp", "dz", "P") + METRIC_COLUMNS:
    OBJECTIVES[f"sg.{_key}"] = Objective(f"sg.{_key}", ("theta", "phi"), _SG_BOUNDS, _sg_field(_key))
for _key in ("dp", "dq", "ip_1", "iq_1", "ip_2", "iq_2"):
    OBJECTIVES[f"qubit.{_key}"] = Objective(
        f"qubit.{_key}", ("theta1", "phi1", "theta2", "phi2"), _QUBIT_BOUNDS, _qubit_field(_key)
    )


class RefineResult(NamedTuple):
    argmax: tuple[float, ...]
    value: float
    evaluations: int
    flat: bool


def _scalar(objective: Objective, params: dict) -> Callable[[Sequence[float]], float]:
    def f(x):
        try:
            v = float(objective.evaluate(*x, **params))
        except (PPSError, ValueError, ZeroDivisionError):
            return math.nan
        return v

    return f


def _is_flat(f, start: np.ndarray, bounds, probe=1e-3) -> bool:
    f0 = f(start)
    for i, (lo, hi) in enumerate(bounds):
        for step in (probe, -probe):
            x = start.copy()
            x[i] = min(max(x[i] + step, lo), hi)
            fx = f(x)
            if not (math.isnan(fx) and math.isnan(f0)) and not abs(fx - f0) <= 1e-15 * max(1.0, abs(f0)):
                return False
    return True


def refine_extremum(
    objective: str | Objective,
    start: Sequence[float],
    params: dict,
    *,
    xatol: float = 1e-8,
    fatol: float = 1e-12,
    max_evals: int = 100_000,
    initial_step: float = 1e-2,
) -> RefineResult:
    """Maximize an objective from ``start`` with a bounded Nelder-Mead simplex.

    Converges when every simplex vertex lies within ``xatol`` radians of the
    best one and their values within ``fatol``.  A locally constant objective
    returns the start point with ``flat=True``.

    Raises
    ------
    NoConvergence
        After ``max_evals`` evaluations; the best point found is attached.
    """
    obj = OBJECTIVES[objective] if isinstance(objective, str) else objective
    x0 = np.array(start, dtype=float)
    if x0.size != len(obj.variables):
        raise ValueError(f"{obj.name} takes {len(obj.variables)} variables, got {x0.size}")
    for v, (lo, hi), name in zip(x0, obj.bounds, obj.variables):
        if not lo <= v <= hi:
            raise ValueError(f"start {name}={v!r} outside [{lo}, {hi}]")
    f = _scalar(obj, params)
    if _is_flat(f, x0, obj.bounds):
        return RefineResult(tuple(x0), f(x0), 1 + 2 * x0.size, True)

    def neg(x):
        v = f(x)
        return math.inf if math.isnan(v) else -v

    simplex = [x0]
    for i, (lo, hi) in enumerate(obj.bounds):
        x = x0.copy()
        x[i] = x[i] + initial_step if x[i] + initial_step <= hi else x[i] - initial_step
        simplex.append(x)
    res = optimize.minimize(
        neg, x0, method="Nelder-Mead", bounds=obj.bounds,
        options={"xatol": xatol, "fatol": fatol, "maxfev": max_evals, "maxiter": max_evals,
                 "initial_simplex": np.array(simplex)},
    )
    if not res.success:
        raise NoConvergence(
            f"{obj.name}: {res.message} after {res.nfev} evaluations",
            best_point=tuple(res.x), best_value=-float(res.fun),
        )
    return RefineResult(tuple(float(v) for v in res.x), -float(res.fun), int(res.nfev), False)


def grid_seed(objective: str | Objective, params: dict, step: float) -> tuple[tuple[float, ...], float]:
    """Best point of a uniform grid with spacing ``step`` radians over the objective's box."""
    obj = OBJECTIVES[objective] if isinstance(objective, str) else objective
    axes = [np.linspace(lo, hi, int(round((hi - lo) / step)) + 1) for lo, hi in obj.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    values = np.asarray(obj.evaluate(*mesh, **params), dtype=float)
    idx = np.unravel_index(np.nanargmax(values), values.shape)
    return tuple(float(m[idx]) for m in mesh), float(values[idx])


def search_maximum(objective: str, params: dict, seed_step: float, **refine_kw) -> RefineResult:
    """Grid seed at ``seed_step`` followed by :func:`refine_extremum`."""
    start, _ = grid_seed(objective, params, seed_step)
    return refine_extremum(objective, start, params, **refine_kw)
