"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 no convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_config, load_json
from .core import (
    GaussianPointer,
    no_postselect_shift,
    postselect_readout,
    strong_limit_shift,
    weak_limit_readout,
    weak_validity_margin,
    weak_value,
)
from .errors import ConfigError, NoConvergence, OrthogonalPPS, PPSError
from .oracle import oracle_readout
from .qubit import momentum_shift_extremes, position_shift_extremes, qubit_extremes
from .scan import (
    METRIC_COLUMNS,
    OBJECTIVES,
    READOUT_COLUMNS,
    ScanTable,
    grid_seed,
    refine_extremum,
    scan_angles,
    scan_g,
)

log = logging.getLogger("ppsmeter")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOCONV = 0, 2, 3, 4


def _emit(text: str, config: RunConfig) -> None:
    if config.out:
        with open(config.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_table(table: ScanTable, config: RunConfig, args) -> None:
    _emit(table.to_csv() if config.format == "csv" else table.to_json(), config)
    for col, info in table.argmax_report().items():
        log.info("argmax %s = %.10g at row %d", col, info["value"], info["row"])
    if getattr(args, "emit_plot_script", None):
        Path(args.emit_plot_script).write_text(_plot_script(table, config))


def _plot_script(table: ScanTable, config: RunConfig) -> str:
    data = config.out or "scan.csv"
    names = [n for n, _ in table.axes] + table.columns
    lines = ["set datafile separator ','", "set key autotitle columnhead"]
    if len(table.axes) == 2:
        lines += ["set pm3d map", "set xlabel 'theta'", "set ylabel 'phi'"]
        for col in table.columns:
            lines.append(f"splot '{data}' using 1:2:{names.index(col) + 1} with pm3d title '{col}'")
            lines.append("pause -1")
    else:
        lines += ["set logscale x", f"set xlabel '{table.axes[0][0]}'"]
        for col in table.columns:
            lines.append(f"plot '{data}' using 1:{names.index(col) + 1} with lines title '{col}'")
            lines.append("pause -1")
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=float) + "\n"


def cmd_readout(config: RunConfig, args) -> int:
    obs, pps, pointer, g = config.observable(), config.pps(), GaussianPointer(config.delta), config.require_g()
    r = postselect_readout(obs, pps, pointer, g)
    out = {"readout": r.as_dict(), "no_postselection_dp": no_postselect_shift(obs, pps.alpha, g)}
    try:
        aw = weak_value(obs, pps)
        dp_w, dq_w = weak_limit_readout(obs, pps, pointer, g)
        out["weak_value"] = [aw.real, aw.imag]
        out["weak_limit"] = {"dp": dp_w, "dq": dq_w}
        out["validity_margins"] = weak_validity_margin(obs, pps, pointer, g, 4)
    except OrthogonalPPS:
        out["weak_value"] = None
    try:
        out["strong_limit_dp"] = strong_limit_shift(obs, pps, g)
    except PPSError:
        out["strong_limit_dp"] = None
    _emit(_json(out), config)
    return EXIT_OK


def cmd_sg_scan(config: RunConfig, args) -> int:
    _emit_table(scan_angles(config, READOUT_COLUMNS), config, args)
    return EXIT_OK


def cmd_metrics_scan(config: RunConfig, args) -> int:
    _emit_table(scan_angles(config, METRIC_COLUMNS), config, args)
    return EXIT_OK


def cmd_sg_max_vs_g(config: RunConfig, args) -> int:
    if config.g_range is None:
        raise ConfigError("sg-max-vs-g needs a g range", field="g_range")
    _emit_table(scan_g(config), config, args)
    return EXIT_OK


def cmd_qubit_extrema(config: RunConfig, args) -> int:
    a1, a2 = sorted(config.eigenvalues, reverse=True)
    g = config.require_g()
    ext = qubit_extremes(a1, a2, config.delta, g)
    mom = momentum_shift_extremes(a1, a2, config.delta, g)
    pos = position_shift_extremes(a1, a2, config.delta, g)

    def pair(p):
        return {"pre": asdict(p[0]), "post": asdict(p[1])}

    out = {
        "a1": a1, "a2": a2, "delta": config.delta, "g": g,
        "extremes": asdict(ext),
        "argmax_dp": pair(mom.argmax), "argmin_dp": pair(mom.argmin),
        "argmax_dq": pair(pos.argmax), "argmin_dq": pair(pos.argmin),
    }
    _emit(_json(out), config)
    return EXIT_OK


def _random_instance(rng: np.random.Generator):
    from .core import Observable, PPSPair

    d = int(rng.integers(2, 6))
    a = rng.uniform(-1.0, 1.0, d)
    if rng.random() < 0.2:
        a[1] = a[0]
    a /= np.abs(a).max()
    states = []
    for _ in range(2):
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        states.append(v / np.linalg.norm(v))
    gd = 10 ** rng.uniform(-3.0, math.log10(5.0))
    return Observable(a), PPSPair(*states), gd


def oracle_check(n_instances: int, seed: int, delta: float, grid) -> dict:
    """Compare the analytic readout with the quadrature oracle on random instances."""
    rng = np.random.default_rng(seed)
    fields = ("probability", "dp", "dq", "sd_p", "sd_q")
    worst = dict.fromkeys(fields, 0.0)
    failures = []
    pointer = GaussianPointer(delta)
    for i in range(n_instances):
        obs, pps, gd = _random_instance(rng)
        g = gd / delta
        exact = postselect_readout(obs, pps, pointer, g)
        brute = oracle_readout(obs, pps, pointer, g, grid)
        for f in fields:
            x, y = getattr(exact, f), getattr(brute, f)
            scale = delta if f in ("dq", "sd_q") else (0.5 / delta if f in ("dp", "sd_p") else 1.0)
            rel = abs(x - y) / max(abs(x), 1e-4 * scale)
            worst[f] = max(worst[f], rel)
            if abs(x - y) > 1e-8 * abs(x) + 1e-12 * scale:
                failures.append({"instance": i, "field": f, "analytic": x, "oracle": y})
    return {"instances": n_instances, "seed": seed, "worst_relative": worst, "failures": failures}


def cmd_oracle_check(config: RunConfig, args) -> int:
    report = oracle_check(args.instances, args.seed, config.delta, config.grid)
    _emit(_json(report), config)
    return EXIT_NUMERIC if report["failures"] else EXIT_OK


def cmd_refine(config: RunConfig, args) -> int:
    if args.objective not in OBJECTIVES:
        raise ConfigError(f"unknown objective; choose from {sorted(OBJECTIVES)}", field="--objective")
    g = config.require_g()
    params = {"delta": config.delta, "g": g}
    if args.objective.startswith("qubit."):
        a1, a2 = config.eigenvalues
        params.update(a1=a1, a2=a2)
    scale = math.pi / 180 if args.unit == "deg" else 1.0
    if args.start:
        try:
            start = [float(v) * scale for v in args.start.split(",")]
        except ValueError as exc:
            raise ConfigError("start must be comma-separated numbers", field="--start") from exc
    else:
        start, _ = grid_seed(args.objective, params, args.seed_step * math.pi / 180)
    try:
        res = refine_extremum(args.objective, start, params)
    except ValueError as exc:
        raise ConfigError(str(exc), field="--start") from exc
    out = {
        "objective": args.objective,
        "start": list(start),
        "argmax": list(res.argmax),
        "value": res.value,
        "evaluations": res.evaluations,
        "flags": ["FlatObjective"] if res.flat else [],
    }
    _emit(_json(out), config)
    return EXIT_OK


COMMANDS = {
    "readout": (cmd_readout, "exact readout, weak value and limits for one configuration"),
    "sg-scan": (cmd_sg_scan, "Stern-Gerlach shifts and probability on a (theta, phi) grid"),
    "sg-max-vs-g": (cmd_sg_max_vs_g, "Stern-Gerlach maximal shifts and probability versus g"),
    "qubit-extrema": (cmd_qubit_extrema, "extremal qubit shifts over all pre/postselected pairs"),
    "metrics-scan": (cmd_metrics_scan, "Stern-Gerlach SNR and sensitivity ratios on a (theta, phi) grid"),
    "oracle-check": (cmd_oracle_check, "compare analytic readouts with the quadrature oracle"),
    "refine": (cmd_refine, "simplex refinement of an objective maximum"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppsmeter", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--g", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--theta-steps", type=int)
        p.add_argument("--phi-steps", type=int)
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("sg-scan", "metrics-scan", "sg-max-vs-g"):
            p.add_argument("--emit-plot-script", metavar="PATH", help="also write a gnuplot script")
        if name == "oracle-check":
            p.add_argument("--instances", type=int, default=100)
            p.add_argument("--seed", type=int, default=0)
        if name == "refine":
            p.add_argument("--objective", required=True, help=", ".join(sorted(OBJECTIVES)))
            p.add_argument("--start", help="comma-separated start point; grid seed when omitted")
            p.add_argument("--unit", choices=("rad", "deg"), default="rad")
            p.add_argument("--seed-step", type=float, default=1.0, help="seed grid spacing in degrees")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler, _ = COMMANDS[args.command]
    try:
        raw = load_json(args.config) if args.config else {}
        config = build_config(
            raw, g=args.g, delta=args.delta, theta_steps=args.theta_steps,
            phi_steps=args.phi_steps, out=args.out, format=args.format,
        )
        return handler(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"no convergence: {exc} (best {exc.best_value!r} at {exc.best_point!r})", file=sys.stderr)
        return EXIT_NOCONV
    except PPSError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
