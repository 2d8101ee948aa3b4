"""Command-line entry point: ``pdlogic <command> --config FILE [options]``."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from ._parallel import THREADS_ENV
from .analysis import basin_scan_lab, basin_scan_rotating, readout
from .config import ConfigError, load_config, preset_names
from .export import export_basin, export_grid, export_reset, export_trajectory
from .integrator import IntegrationConfig, NumericalError, integrate
from .models import SystemState
from .protocols import (
    INPUT_CONFIGS,
    InitializationError,
    ProtocolError,
    run_truth_table,
    site_calibration,
)
from .sweeps import CODE_CLASS, sweep_flip, sweep_gate, sweep_reset

log = logging.getLogger("pdlogic")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
FULL_GRID, FULL_REALIZATIONS = 41, 100


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, sweep=False):
    p.add_argument("--config", required=True, help="YAML/JSON file or preset name")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. sweep.Tq.count=3")
    p.add_argument("--seed", type=int, help="base seed for noise realizations")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--out", help="output file (CSV); sidecar JSON written next to it")
    p.add_argument("-v", "--verbose", action="store_true")
    if sweep:
        p.add_argument("--full", action="store_true",
                       help=f"large {FULL_GRID}x{FULL_GRID} grid, "
                            f"{FULL_REALIZATIONS} realizations")
        p.add_argument("--resume", action="store_true",
                       help="keep a cell journal next to --out and skip finished cells")


def build_parser():
    parser = _Parser(prog="pdlogic", description="Period-doubled bit logic simulations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("simulate", help="one trajectory with demodulated readout"))
    _common(sub.add_parser("flip-scan", help="bit-flip success over (coupling, Tq)"), sweep=True)
    _common(sub.add_parser("gate", help="one NAND/NOR truth table"))
    _common(sub.add_parser("gate-scan", help="gate success over (coupling, Tq)"), sweep=True)
    b = sub.add_parser("basins", help="basin-of-attraction map")
    _common(b)
    b.add_argument("frame", nargs="?", choices=("lab", "rotating"),
                   help="override basins.frame")
    _common(sub.add_parser("reset-scan", help="reset phase difference over Tq"), sweep=True)
    v = sub.add_parser("validate-config", help="check a config and print its parsed form")
    v.add_argument("--config", required=True)
    v.add_argument("--set", action="append", default=[])
    sub.add_parser("presets", help="list shipped preset configs")
    return parser


def _out_path(args, cfg, suffix):
    if args.out:
        return args.out
    os.makedirs(cfg.output.dir, exist_ok=True)
    return os.path.join(cfg.output.dir, f"{cfg.output.prefix}_{suffix}.csv")


def _progress(label):
    last = [0.0]

    def report(done, total):
        now = time.monotonic()
        if done == total or now - last[0] > 2.0:
            last[0] = now
            log.info("%s: %d/%d cells", label, done, total)
    return report


def _overrides(args):
    sets = list(args.set)
    if getattr(args, "full", False):
        sets += [f"sweep.coupling.count={FULL_GRID}", f"sweep.Tq.count={FULL_GRID}",
                 f"sweep.n_realizations={FULL_REALIZATIONS}"]
    if getattr(args, "seed", None) is not None:
        sets += [f"sweep.base_seed={args.seed}", f"protocol.seed={args.seed}"]
    return sets


def _timing(cfg):
    p = cfg.protocol
    return dict(relax_before=p.relax_before, relax_after=p.relax_after,
                pulse_offset=p.pulse_offset)


def _journal(args, out):
    return out + ".partial.jsonl" if getattr(args, "resume", False) else None


def cmd_validate(args, cfg):
    import yaml
    print(yaml.safe_dump(cfg.to_dict(), sort_keys=False), end="")
    print(f"# params: {cfg.params()!r}")
    return EXIT_OK


def cmd_simulate(args, cfg):
    params = cfg.params()
    s = cfg.simulate
    num = cfg.numerics
    if s.init is None:
        init = site_calibration(params, numerics=num).seeds[cfg.protocol.bit]
    else:
        init = _state_from_list(params.kind, s.init)
        if init.n_sites != 1:
            raise ConfigError("simulate.init describes one site")
    noise_from = math.inf if s.noise_from is None else s.noise_from
    icfg = IntegrationConfig.for_model(params, s.periods, num.steps_per_period,
                                       num.samples_per_subharmonic,
                                       rng_seed=cfg.protocol.seed)
    if math.isfinite(noise_from):
        icfg = IntegrationConfig(icfg.dt, icfg.t0, icfg.tf, icfg.sample_stride, icfg.rng_seed,
                                 noise_from * (2 * math.pi / params.drive_frequency))
    t0 = time.perf_counter()
    traj = integrate(params, None, init, icfg)
    d = readout(traj, n_windows=num.readout_windows)
    out = _out_path(args, cfg, "trajectory")
    export_trajectory(traj, out, demod=d, config=cfg.to_dict(),
                      wall_time=time.perf_counter() - t0)
    print(f"r={d.r[0]:.6g} phi={d.phi[0]:.6g} -> {out}")
    return EXIT_OK


def _state_from_list(kind, values):
    vals = np.asarray(values, dtype=float)
    if kind == "dpo":
        return SystemState(kind, vals.reshape(-1, 2))
    if kind == "kpo":
        v = vals.reshape(-1, 2)
        return SystemState(kind, v[:, 0] + 1j * v[:, 1])
    v = vals.reshape(-1, 4)
    return SystemState(kind, np.stack([v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3]], axis=1))


def cmd_gate(args, cfg):
    p = cfg.protocol
    if p.kind not in ("NAND", "NOR"):
        raise ConfigError("gate needs protocol.kind NAND or NOR")
    noise = bool(p.noise)
    tt = run_truth_table(cfg.params(), p.kind, p.coupling, p.Tq, cfg.numerics,
                         seed=p.seed if noise else None, noise=noise, **_timing(cfg))
    print(f"{p.kind}  coupling={p.coupling:g}  Tq={tt.Tq_rounded:g} T_d")
    print("I1 I2 | O  expected | inputs flipped | class")
    for c in INPUT_CONFIGS:
        o = tt.outcomes[c]
        fl = ",".join(str(int(f)) for f in o.input_flipped)
        print(f" {c[0]}  {c[1]} | {o.output:>2} {o.expected:>5}     | {fl:>14} | "
              f"{o.classification}")
    print(f"classification: {tt.classification}")
    if args.out:
        import json
        with open(args.out, "w") as fh:
            json.dump({"config": cfg.to_dict(), "result": tt.to_record()}, fh, indent=2,
                      sort_keys=True)
    return EXIT_OK


def _report_grid(grid):
    v = grid.values
    if grid.quantity == "classification":
        counts = {CODE_CLASS[k]: int(np.sum(v == k)) for k in CODE_CLASS}
        print(", ".join(f"{k}: {n}" for k, n in counts.items()) + f", failed: {grid.failed_cells}")
    else:
        print(f"mean {grid.quantity} {np.nanmean(v):.4g}, failed cells {grid.failed_cells}")


def cmd_flip_scan(args, cfg):
    out = _out_path(args, cfg, "flip")
    grid = sweep_flip(cfg.params(), cfg.axis("coupling"), cfg.axis("Tq"),
                      cfg.sweep.n_realizations, cfg.sweep.base_seed, cfg.numerics,
                      bit=cfg.protocol.bit, threads=args.threads, journal=_journal(args, out),
                      progress=_progress("flip-scan"), noise=cfg.protocol.noise, **_timing(cfg))
    export_grid(grid, out, config=cfg.to_dict())
    _report_grid(grid)
    print(out)
    return EXIT_OK


def cmd_gate_scan(args, cfg):
    out = _out_path(args, cfg, "gate")
    kind = cfg.protocol.kind
    if kind not in ("NAND", "NOR"):
        raise ConfigError("gate-scan needs protocol.kind NAND or NOR")
    grid = sweep_gate(cfg.params(), kind, cfg.axis("coupling"), cfg.axis("Tq"),
                      cfg.sweep.n_realizations, cfg.sweep.base_seed, cfg.protocol.count_pseudo,
                      cfg.numerics, threads=args.threads, journal=_journal(args, out),
                      progress=_progress("gate-scan"), noise=cfg.protocol.noise, **_timing(cfg))
    export_grid(grid, out, config=cfg.to_dict())
    _report_grid(grid)
    print(out)
    return EXIT_OK


def cmd_reset_scan(args, cfg):
    out = _out_path(args, cfg, "reset")
    p = cfg.protocol
    table = sweep_reset(cfg.params(), p.coupling, cfg.axis("Tq"), cfg.numerics,
                        reference_bit=p.reference_bit, output_init=p.output_init,
                        quench=p.quench, relax_before=p.relax_before,
                        relax_after=p.relax_after, base_seed=cfg.sweep.base_seed,
                        threads=args.threads, journal=_journal(args, out),
                        progress=_progress("reset-scan"), noise=p.noise)
    export_reset(table, out, config=cfg.to_dict())
    sync, anti, rest = table.clusters()
    print(f"synchronized: {len(sync)}, anti-synchronized: {len(anti)}, other: {len(rest)}")
    print(out)
    return EXIT_OK


def cmd_basins(args, cfg):
    b = cfg.basins
    frame = args.frame or b.frame
    params = cfg.params()
    num = cfg.numerics
    t0 = time.perf_counter()
    x, y = cfg.basin_axis("x").values, cfg.basin_axis("y").values
    if frame == "lab":
        bm = basin_scan_lab(params, x, y, b.t_final, num.steps_per_period, threads=args.threads)
    else:
        bm = basin_scan_rotating(params, x, y, tuple(b.seed_theta), tuple(b.seed_theta_dot),
                                 b.seed_count, b.t_final, num.steps_per_period,
                                 threads=args.threads)
    out = _out_path(args, cfg, f"basins_{frame}")
    export_basin(bm, out, config=cfg.to_dict(), wall_time=time.perf_counter() - t0)
    labels, counts = np.unique(bm.labels, return_counts=True)
    print(", ".join(f"label {int(k)}: {int(n)}" for k, n in zip(labels, counts)))
    print(out)
    return EXIT_OK


COMMANDS = {
    "validate-config": cmd_validate,
    "simulate": cmd_simulate,
    "gate": cmd_gate,
    "flip-scan": cmd_flip_scan,
    "gate-scan": cmd_gate_scan,
    "reset-scan": cmd_reset_scan,
    "basins": cmd_basins,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, InitializationError, ProtocolError) as exc:
        where = f" at t={exc.time:.6g}" if getattr(exc, "time", None) is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
