"""Parallel (coupling, Tq) grid sweeps with deterministic per-cell seeding."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .analysis import UNDEFINED
from .integrator import NumericalError, derive_seed
from .models import noise_amplitudes
from .protocols import (
    FAIL,
    FULL,
    PSEUDO,
    InitializationError,
    Numerics,
    ProtocolError,
    flip_outcome,
    run_reset,
    run_truth_table,
)

log = logging.getLogger(__name__)

CLASS_CODE = {FULL: 2.0, PSEUDO: 1.0, FAIL: 0.0}
CODE_CLASS = {v: k for k, v in CLASS_CODE.items()}


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"axis {self.name!r} needs count >= 2")
        if not self.max > self.min:
            raise ValueError(f"axis {self.name!r} needs max > min")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)

    def to_dict(self):
        return {"name": self.name, "min": self.min, "max": self.max, "count": self.count}


@dataclass
class SweepGrid:
    """Per-cell results on ``axes[0] x axes[1]``; NaN marks a failed cell.

    ``quantity`` is one of ``success`` (0/1), ``probability``,
    ``classification`` (2 Full, 1 Pseudo, 0 Fail) or ``delta_phi``.
    """

    axes: tuple
    values: np.ndarray
    quantity: str
    n_realizations: int = 1
    base_seed: int = 0
    meta: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def shape(self):
        return self.values.shape

    def coords(self, axis: int = 0) -> np.ndarray:
        return self.axes[axis].values

    def row(self, value: float) -> np.ndarray:
        """Row of the first axis closest to ``value``."""
        i = int(np.argmin(np.abs(self.coords(0) - value)))
        return self.values[i]

    @property
    def failed_cells(self) -> int:
        return int(np.isnan(self.values).sum())

    def l1_distance(self, other: "SweepGrid") -> float:
        if self.values.shape != other.values.shape:
            raise ValueError("grids differ in shape")
        return float(np.nansum(np.abs(self.values - other.values)))


def is_noisy(params, noise=None) -> bool:
    """Explicit ``noise`` wins; otherwise noisy iff the model has a nonzero noise amplitude."""
    if noise is not None:
        return bool(noise)
    return not noise_amplitudes(params).is_zero


class _Journal:
    """Append-only JSONL record of finished cells, keyed by a run fingerprint."""

    def __init__(self, path, fingerprint):
        self.path = path
        self.fingerprint = fingerprint
        self._lock = threading.Lock()
        self.done = {}
        if path and os.path.exists(path):
            with open(path) as fh:
                lines = [json.loads(x) for x in fh if x.strip()]
            if lines and lines[0].get("fingerprint") == fingerprint:
                self.done = {int(r["cell"]): _decode(r["value"]) for r in lines[1:]}
            else:
                log.warning("ignoring journal %s written for a different run", path)
                os.remove(path)
        if path and not os.path.exists(path):
            with open(path, "w") as fh:
                fh.write(json.dumps({"fingerprint": fingerprint}) + "\n")

    def record(self, cell, value):
        if not self.path:
            return
        with self._lock, open(self.path, "a") as fh:
            fh.write(json.dumps({"cell": cell, "value": _encode(value)}) + "\n")

    def close(self):
        if self.path and os.path.exists(self.path):
            os.remove(self.path)


def _encode(v):
    return None if math.isnan(v) else v


def _decode(v):
    return math.nan if v is None else float(v)


def fingerprint(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _run_grid(cell_fn, n_cells, threads, journal_path, fp, progress=None):
    journal = _Journal(journal_path, fp)
    todo = [c for c in range(n_cells) if c not in journal.done]
    if journal.done:
        log.info("resuming: %d of %d cells already done", len(journal.done), n_cells)
    counter = {"n": 0}
    lock = threading.Lock()

    def run(c):
        try:
            v = float(cell_fn(c))
        except (NumericalError, InitializationError, ProtocolError) as exc:
            log.warning("cell %d failed: %s", c, exc)
            v = math.nan
        journal.record(c, v)
        with lock:
            counter["n"] += 1
            if progress is not None:
                progress(counter["n"], len(todo))
        return c, v

    results = dict(journal.done)
    results.update(parallel_map(run, todo, threads))
    journal.close()
    return np.array([results[c] for c in range(n_cells)], dtype=float)


def _grid(params, coupling_axis, tq_axis, cell_value, quantity, n_realizations, base_seed,
          threads, journal, meta, progress):
    t0 = time.perf_counter()
    cj, ct = coupling_axis.values, tq_axis.values
    n = len(cj) * len(ct)
    fp = fingerprint(repr(params), coupling_axis.to_dict(), tq_axis.to_dict(), quantity,
                     n_realizations, base_seed, meta)

    def cell(c):
        i, k = divmod(c, len(ct))
        return cell_value(float(cj[i]), float(ct[k]), derive_seed(base_seed, c))

    flat = _run_grid(cell, n, threads, journal, fp, progress)
    return SweepGrid((coupling_axis, tq_axis), flat.reshape(len(cj), len(ct)), quantity,
                     n_realizations, base_seed, dict(meta), time.perf_counter() - t0)


def sweep_flip(params, coupling_axis: Axis, tq_axis: Axis, n_realizations: int = 20,
               base_seed: int = 0, numerics: Numerics = Numerics(), bit: int = 1,
               relax_before=60.0, relax_after=100.0, pulse_offset=0.0, threads=None,
               journal=None, progress=None, noise=None) -> SweepGrid:
    """Bit-flip success over the grid: 0/1 when noiseless, else a probability."""
    noisy = is_noisy(params, noise)
    n_real = n_realizations if noisy else 1
    timing = dict(relax_before=relax_before, relax_after=relax_after, pulse_offset=pulse_offset)

    def value(j, tq, seed):
        hits = 0
        for k in range(n_real):
            out = flip_outcome(params, j, tq, bit=bit, numerics=numerics,
                               seed=derive_seed(seed, k), noise=noisy, **timing)
            hits += out.success
        return hits / n_real

    meta = {"protocol": "FLIP", "bit": bit, "noise": noisy, **timing}
    return _grid(params, coupling_axis, tq_axis, value,
                 "probability" if noisy else "success", n_real, base_seed, threads, journal,
                 meta, progress)


def sweep_gate(params, kind: str, coupling_axis: Axis, tq_axis: Axis, n_realizations: int = 20,
               base_seed: int = 0, count_pseudo: bool = True, numerics: Numerics = Numerics(),
               relax_before=60.0, relax_after=100.0, pulse_offset=0.0, threads=None,
               journal=None, progress=None, noise=None) -> SweepGrid:
    """Gate success probability per cell, or the Full/Pseudo/Fail code when noiseless."""
    kind = kind.upper()
    noisy = is_noisy(params, noise)
    timing = dict(relax_before=relax_before, relax_after=relax_after, pulse_offset=pulse_offset)

    if noisy:
        def value(j, tq, seed):
            hits = 0
            for k in range(n_realizations):
                tt = run_truth_table(params, kind, j, tq, numerics, seed=derive_seed(seed, k),
                                     noise=True, **timing)
                ok = tt.classification in ((FULL, PSEUDO) if count_pseudo else (FULL,))
                hits += ok
            return hits / n_realizations
        quantity, n_real = "probability", n_realizations
    else:
        def value(j, tq, seed):
            return CLASS_CODE[run_truth_table(params, kind, j, tq, numerics, **timing)
                              .classification]
        quantity, n_real = "classification", 1

    meta = {"protocol": kind, "noise": noisy, "count_pseudo": count_pseudo, **timing}
    return _grid(params, coupling_axis, tq_axis, value, quantity, n_real, base_seed, threads,
                 journal, meta, progress)


@dataclass
class ResetTable:
    """Delta-phi per reset pulse duration; NaN where the output stayed undefined."""

    Tq: np.ndarray
    delta_phi: np.ndarray
    coupling: float
    meta: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def clusters(self, tol: float = 0.05):
        """Indices near 0 and near pi, and the leftovers."""
        d = self.delta_phi
        sync = np.flatnonzero(np.abs(d) <= tol)
        anti = np.flatnonzero(np.abs(d - math.pi) <= tol)
        rest = np.setdiff1d(np.arange(d.size), np.concatenate([sync, anti]))
        return sync, anti, rest


def sweep_reset(params, coupling: float, tq_axis: Axis, numerics: Numerics = Numerics(),
                reference_bit: int = 1, output_init=None, quench: float = 100.0,
                relax_before=60.0, relax_after=100.0, base_seed: int = 0, threads=None,
                journal=None, progress=None, noise=None) -> ResetTable:
    t0 = time.perf_counter()
    tq = tq_axis.values
    noisy = is_noisy(params, noise)
    meta = {"protocol": "RESET", "reference_bit": reference_bit, "output_init": output_init,
            "quench": quench, "relax_before": relax_before, "relax_after": relax_after,
            "noise": noisy}
    fp = fingerprint(repr(params), coupling, tq_axis.to_dict(), meta, base_seed)

    def cell(c):
        out = run_reset(params, coupling, float(tq[c]), reference_bit=reference_bit,
                        output_init=output_init, quench=quench, numerics=numerics,
                        seed=derive_seed(base_seed, c), noise=noisy,
                        relax_before=relax_before, relax_after=relax_after)
        return math.nan if out.output_bit == UNDEFINED else out.delta_phi

    dphi = _run_grid(cell, len(tq), threads, journal, fp, progress)
    return ResetTable(tq, dphi, coupling, meta, time.perf_counter() - t0)


def contiguous_bands(mask) -> list:
    """(start, stop) index pairs of the runs of True in a 1-D mask."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(int))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))
