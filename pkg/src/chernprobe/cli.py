"""Command-line entry point: ``chernprobe <subcommand> [--config PATH] [--out PATH]``.

CSV outputs start with ``#``-prefixed lines holding the run configuration,
followed by the header row. JSON outputs are single objects with the
configuration under ``"config"``. Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .engine import simulate_ensemble, simulate_trajectory, solve_feedback_unconditional, solve_unconditional
from .errors import ChernProbeError, ConfigError
from .estimation import chern_from_expectation, ensemble_estimate
from .experiments import (SWEEP_MODES, OptimizationSpec, SweepSpec, optimize_parameters,
                          rabi_demo, run_sweep, scan_kappa)
from .model import mhz

log = logging.getLogger("chernprobe")


def _num(value) -> str:
    """Round-trip text for CSV cells; NaN and None become empty cells."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if not math.isfinite(value) else value
    if isinstance(value, np.integer):
        return int(value)
    return value


def _range(text: str, name: str) -> tuple[float, float, float]:
    try:
        parts = [float(s) for s in text.split(":")]
    except ValueError:
        parts = []
    if len(parts) != 3:
        raise ConfigError(f"--{name}: expected lo:hi:step, got {text!r}")
    return parts[0], parts[1], parts[2]


def _ratio_grid(text: str) -> list[float]:
    lo, hi, step = _range(text, "ratios")
    if step <= 0 or hi < lo:
        raise ConfigError("--ratios: need step > 0 and hi >= lo")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(n)]


def _kappa_grid(text: str) -> np.ndarray:
    lo, hi, count = _range(text, "kappas")
    if lo <= 0 or hi < lo or count < 1 or count != int(count):
        raise ConfigError("--kappas: need 0 < lo <= hi and an integer count >= 1")
    return np.geomspace(lo, hi, int(count))


def _modes(text: str | None, default) -> tuple[str, ...]:
    if text is None:
        return tuple(default)
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in modes if m not in SWEEP_MODES]
    if bad or not modes:
        raise ConfigError(f"--modes: expected a comma list from {', '.join(SWEEP_MODES)}")
    return modes


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "eta", None) is not None:
        changes["eta"] = args.eta
    if getattr(args, "n", None) is not None:
        changes["n_runs"] = args.n
    return cfg.replace(**changes) if changes else cfg


def _rows(n_steps: int, stride: int) -> list[int]:
    """Grid indices kept by ``--stride``; the final point is always kept."""
    idx = list(range(0, n_steps + 1, stride))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return idx


def _write_csv(out, cfg: RunConfig, header, rows):
    buf = io.StringIO()
    for line in cfg.dumps().splitlines():
        buf.write(f"# {line}\n")
    buf.write(f"# version = {__version__}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_num(v) for v in row])
    out.write(buf.getvalue())


def _write_json(out, cfg: RunConfig, command: str, payload: dict):
    doc = {"command": command, "version": __version__, "config": cfg.to_dict(), **payload}
    out.write(json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False))
    out.write("\n")


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig, out):
    p, mc = cfg.protocol(), cfg.measurement()
    rec = simulate_trajectory(p, mc)
    k = rec.n_steps
    signal = rec.signal
    rows = []
    for i in _rows(k, args.stride):
        v = signal[i] if signal is not None and i < k else None
        x, y, z = rec.states[i]
        rows.append((rec.times[i], rec.thetas[i], x, y, z, v, rec.purity[i]))
    _write_csv(out, cfg, ("t_us", "theta", "x", "y", "z", "V", "purity"), rows)


def cmd_sweep(args, cfg: RunConfig, out):
    spec = SweepSpec(ratio_grid=tuple(_ratio_grid(args.ratios)), protocol=cfg.protocol(),
                     cfg=cfg.measurement(), n_runs=cfg.n_runs,
                     modes=_modes(args.modes, SWEEP_MODES), workers=args.workers)
    keys = ("ratio", "mode", "cy", "cv_mean", "cv_stderr", "eq10_bound", "status")
    _write_csv(out, cfg, keys, [[r[k] for k in keys] for r in run_sweep(spec)])


def cmd_scan_kappa(args, cfg: RunConfig, out):
    ratio = cfg.ratio if args.ratio is None else args.ratio
    kappas = mhz(_kappa_grid(args.kappas))
    rows = scan_kappa(ratio, kappas, cfg.protocol(),
                      modes=_modes(args.modes, ("probed", "probed+feedback")),
                      cfg=cfg.measurement())
    keys = ("kappa_mhz", "mode", "cy", "deviation", "deviation_integer", "status")
    _write_csv(out, cfg, keys, [[r[k] for k in keys] for r in rows])


def cmd_ensemble(args, cfg: RunConfig, out):
    if cfg.n_runs < 2:
        raise ConfigError("n_runs: ensemble needs at least 2 runs (use --n)")
    p, mc = cfg.protocol(), cfg.measurement()
    if mc.kappa <= 0 or mc.eta <= 0:
        raise ConfigError("kappa_mhz and eta must be positive for an ensemble")
    if mc.feedback_mode == "none":
        cy = chern_from_expectation(solve_unconditional(p, mc), p)
    else:
        cy = chern_from_expectation(solve_feedback_unconditional(p, mc), p)
    records = simulate_ensemble(p, mc, cfg.n_runs, workers=args.workers)
    stats = ensemble_estimate(records, p)
    _write_json(out, cfg, "ensemble", {
        "n_runs": stats.n_runs, "mean": stats.mean, "std": stats.std, "stderr": stats.stderr,
        "eq10_bound": stats.bound, "eq10_bound_single": stats.bound_single,
        "cy_unconditional": cy, "values": stats.values,
    })


def _pair(text: str | None, name: str):
    if text is None:
        return None
    try:
        lo, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise ConfigError(f"--{name}: expected lo:hi, got {text!r}") from None
    return lo, hi


def cmd_optimize(args, cfg: RunConfig, out):
    changes = {"omega1_ratio": cfg.omega1_ratio, "delta2_ratio": cfg.ratio, "eta": cfg.eta,
               "feedback_mode": cfg.feedback, "dt": cfg.dt_us}
    if args.constraint_cy is not None:
        changes["constraint_cy"] = args.constraint_cy
    for flag, key in (("delta1_range", "delta1_range_mhz"), ("tq_range", "tq_range_us"),
                      ("kappa_range", "kappa_range_mhz")):
        pair = _pair(getattr(args, flag), flag.replace("_", "-"))
        if pair is not None:
            changes[key] = pair
    if args.anchor is not None:
        changes["delta1_anchor_mhz"] = args.anchor
    spec = OptimizationSpec(**changes)
    res = optimize_parameters(spec)
    _write_json(out, cfg, "optimize", {
        "inputs": {"constraint_cy": spec.constraint_cy, "delta1_range_mhz": spec.delta1_range_mhz,
                   "tq_range_us": spec.tq_range_us, "kappa_range_mhz": spec.kappa_range_mhz,
                   "sigma_multiplier": spec.sigma_multiplier, "delta1_anchor_mhz": spec.anchor},
        "optimum": {"delta1_mhz": res.delta1_mhz, "tq_us": res.tq_us, "kappa_mhz": res.kappa_mhz,
                    "cy": res.cy, "eq10_bound_single": res.noise_single,
                    "n_required": res.n_required, "delta1_tq": res.delta1_tq,
                    "kappa_over_delta1": res.kappa_over_delta1},
        "evaluations": res.evaluations,
    })


def cmd_rabi_demo(args, cfg: RunConfig, out):
    if cfg.kappa_mhz <= 0:
        raise ConfigError("kappa_mhz: the Rabi demo drive scales with kappa and needs kappa_mhz > 0")
    mode = cfg.feedback if cfg.feedback != "none" else "exact"
    monitored, reference = rabi_demo(mhz(cfg.kappa_mhz), cfg.eta, mode, periods=args.periods,
                                     dt=cfg.dt_us, seed=cfg.seed)
    rows = []
    for i in _rows(monitored.n_steps, args.stride):
        rows.append((monitored.times[i], *monitored.states[i], monitored.purity[i],
                     *reference.states[i]))
    _write_csv(out, cfg, ("t_us", "x", "y", "z", "purity", "x_ref", "y_ref", "z_ref"), rows)


# -- parser ---------------------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value run configuration")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--seed", type=_seed, metavar="U64", help="override the config seed")
    common.add_argument("--eta", type=float, help="override the detector efficiency")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chernprobe",
                                     description="Chern-number probing of a swept qubit under weak measurement.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="one conditional trajectory as CSV")
    s.add_argument("--stride", type=_positive_int, default=1, metavar="K")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="C_y versus Delta2/Delta1 as CSV")
    s.add_argument("--ratios", default="0:2:0.1", metavar="LO:HI:STEP")
    s.add_argument("--modes", help=f"comma list from {','.join(SWEEP_MODES)}")
    s.add_argument("--n", type=_positive_int, help="trajectories per point for signal statistics")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("scan-kappa", parents=[common], help="C_y deviation versus kappa as CSV")
    s.add_argument("--kappas", default="0.01:1:13", metavar="LO:HI:COUNT",
                   help="log-spaced kappa/2pi grid in MHz")
    s.add_argument("--ratio", type=float, help="Delta2/Delta1 (default: config ratio)")
    s.add_argument("--modes", help="comma list (default: probed,probed+feedback)")
    s.set_defaults(func=cmd_scan_kappa)

    s = sub.add_parser("ensemble", parents=[common], help="signal-estimate statistics as JSON")
    s.add_argument("--n", type=_positive_int, help="number of trajectories")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("optimize", parents=[common], help="least-noise operating point as JSON")
    s.add_argument("--constraint-cy", type=float)
    s.add_argument("--delta1-range", metavar="LO:HI", help="MHz")
    s.add_argument("--tq-range", metavar="LO:HI", help="us")
    s.add_argument("--kappa-range", metavar="LO:HI", help="MHz")
    s.add_argument("--anchor", type=float, help="Delta1/2pi in MHz used to fix the overall scale")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("rabi-demo", parents=[common], help="monitored Rabi oscillation with feedback as CSV")
    s.add_argument("--periods", type=float, default=5.0)
    s.add_argument("--stride", type=_positive_int, default=1, metavar="K")
    s.set_defaults(func=cmd_rabi_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        if args.out:
            buf = io.StringIO()
            args.func(args, cfg, buf)
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        else:
            args.func(args, cfg, sys.stdout)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ChernProbeError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
