"""CSV results with JSON metadata sidecars."""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import __version__

FLOAT_FMT = "{:.9g}"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return FLOAT_FMT.format(v)


def sidecar_path(path) -> str:
    root, _ = os.path.splitext(str(path))
    return root + ".json"


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)  # "inf", "-inf", "nan" stay readable by the YAML loader
    return obj


def write_metadata(path, config=None, seeds=None, wall_time=None, **extra):
    """JSON sidecar with sorted keys so re-exports are byte-identical."""
    meta = {"version": __version__, "config": config, "seeds": seeds, "wall_time": wall_time}
    meta.update(extra)
    with open(path, "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_grid(grid, path, config=None, wall_time=None) -> tuple:
    """Row-major CSV (axis1, axis2, value) plus metadata sidecar."""
    a0, a1 = grid.axes
    x, y = a0.values, a1.values
    rows = [(x[i], y[k], grid.values[i, k]) for i in range(len(x)) for k in range(len(y))]
    write_csv(path, (a0.name, a1.name, grid.quantity), rows)
    side = sidecar_path(path)
    write_metadata(
        side, config=config,
        seeds={"base_seed": grid.base_seed, "n_realizations": grid.n_realizations},
        wall_time=grid.wall_time if wall_time is None else wall_time,
        axes=[a0.to_dict(), a1.to_dict()], quantity=grid.quantity, result=grid.meta,
        failed_cells=grid.failed_cells,
    )
    return str(path), side


def export_basin(basin, path, config=None, wall_time=None) -> tuple:
    nx, ny = basin.axis_names
    rows = [(basin.x[i], basin.y[k], int(basin.labels[i, k]))
            for i in range(len(basin.x)) for k in range(len(basin.y))]
    write_csv(path, (nx, ny, "label"), rows)
    side = sidecar_path(path)
    write_metadata(side, config=config, wall_time=wall_time, frame=basin.frame,
                   grid={nx: [basin.x[0], basin.x[-1], len(basin.x)],
                         ny: [basin.y[0], basin.y[-1], len(basin.y)]},
                   result=basin.meta)
    return str(path), side


def export_reset(table, path, config=None, wall_time=None) -> tuple:
    write_csv(path, ("Tq", "delta_phi"), zip(table.Tq, table.delta_phi))
    side = sidecar_path(path)
    write_metadata(side, config=config, wall_time=table.wall_time if wall_time is None
                   else wall_time, coupling=table.coupling, result=table.meta)
    return str(path), side


def export_trajectory(traj, path, demod=None, config=None, wall_time=None) -> tuple:
    """Samples as columns ``t, <state components per site>``."""
    names = {"dpo": ("theta", "theta_dot"), "kpo": ("re_a", "im_a"),
             "dlm": ("re_a", "im_a", "re_b", "im_b")}[traj.kind]
    m = traj.params.M
    # flat layout stores each component block across all sites
    header = ["t"] + [f"{c}_{s}" for c in names for s in range(m)]
    rows = (np.concatenate([[t], s]) for t, s in zip(traj.times, traj.samples))
    write_csv(path, header, rows)
    side = sidecar_path(path)
    extra = {}
    if demod is not None:
        extra["readout"] = {"r": demod.r, "phi": demod.phi, "X": demod.amplitude.real,
                            "Y": demod.amplitude.imag, "window": list(demod.window)}
    write_metadata(side, config=config, seeds={"rng_seed": traj.config.rng_seed},
                   wall_time=wall_time, **extra)
    return str(path), side


def read_csv(path):
    """Header and float rows of a file written here."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data
