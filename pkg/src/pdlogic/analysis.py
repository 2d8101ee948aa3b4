"""Absolute-time-phase demodulation, bit readout and basin-of-attraction maps."""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._parallel import parallel_map
from .integrator import IntegrationConfig, NumericalError, integrate
from .models import SystemState, single_site, subharmonic_frequency

__all__ = [
    "Bit",
    "UNDEFINED",
    "UNREACHABLE",
    "DemodResult",
    "BasinMap",
    "demodulate",
    "demodulate_samples",
    "readout",
    "classify_bit",
    "rotating_frame_point",
    "delta_phi",
    "reference_amplitude",
    "basin_scan_lab",
    "basin_scan_rotating",
]

UNDEFINED = -1
UNREACHABLE = -2


class Bit(enum.IntEnum):
    ZERO = 0
    ONE = 1
    UNDEFINED = UNDEFINED


@dataclass(frozen=True)
class DemodResult:
    """Complex subharmonic amplitude r*exp(i*phi) of each site."""

    amplitude: np.ndarray = field(repr=False)
    window: tuple = (0.0, 0.0)

    @property
    def r(self) -> np.ndarray:
        return np.abs(self.amplitude)

    @property
    def phi(self) -> np.ndarray:
        return np.angle(self.amplitude)


def demodulate_samples(values, omega_R: float, sample_interval: float, t_start: float = 0.0):
    """Demodulate samples spanning exactly one subharmonic window.

    ``values`` has the window's ``n + 1`` samples along axis 0 (both endpoints
    included). Returns ``(omega_R/pi) * int exp(i omega_R tau) s(tau) dtau``
    evaluated with the trapezoidal rule.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0] - 1
    tau = t_start + sample_interval * np.arange(n + 1)
    phase = np.exp(1j * omega_R * tau)
    if values.ndim > 1:
        phase = phase.reshape((-1,) + (1,) * (values.ndim - 1))
    return (omega_R / math.pi) * np.trapezoid(phase * values, dx=sample_interval, axis=0)


def _window_slice(traj, t, omega_R):
    h = traj.sample_interval
    width = 2.0 * math.pi / omega_R
    n_w = width / h
    if abs(n_w - round(n_w)) > 1e-6:
        raise ValueError("window length is not a whole number of samples")
    n_w = int(round(n_w))
    if n_w < 32:
        raise ValueError(f"only {n_w} samples per window, need >= 32")
    i0 = (t - traj.times[0]) / h
    if abs(i0 - round(i0)) > 1e-6:
        raise ValueError(f"window start {t} does not fall on a sample")
    i0 = int(round(i0))
    if i0 < 0 or i0 + n_w > len(traj) - 1:
        raise ValueError("demodulation window exceeds the trajectory")
    return i0, n_w


def demodulate(traj, t: float, omega_R: float | None = None, sites=None) -> DemodResult:
    """Complex amplitude of each site's observable over ``[t, t + 2 pi/omega_R]``."""
    omega_R = subharmonic_frequency(traj.params) if omega_R is None else omega_R
    i0, n_w = _window_slice(traj, t, omega_R)
    obs = traj.observable()
    if sites is not None:
        obs = obs[:, sites]
    amp = demodulate_samples(obs[i0 : i0 + n_w + 1], omega_R, traj.sample_interval,
                             traj.times[i0])
    return DemodResult(np.atleast_1d(amp), (traj.times[i0], traj.times[i0 + n_w]))


def readout(traj, end: float | None = None, n_windows: int = 8, omega_R=None) -> DemodResult:
    """Mean amplitude over ``n_windows`` consecutive windows ending at ``end``."""
    omega_R = subharmonic_frequency(traj.params) if omega_R is None else omega_R
    end = traj.times[-1] if end is None else end
    width = 2.0 * math.pi / omega_R
    start = end - n_windows * width
    # snap down to the sample grid so the windows never reach past ``end``
    h = traj.sample_interval
    start = traj.times[0] + math.floor((start - traj.times[0]) / h + 1e-6) * h
    amps = [demodulate(traj, start + k * width, omega_R).amplitude for k in range(n_windows)]
    return DemodResult(np.mean(amps, axis=0), (start, start + n_windows * width))


def classify_bit(d: DemodResult, r_min: float) -> np.ndarray:
    """phi < 0 -> 1, phi > 0 -> 0; weak (r < r_min) or phi == 0 -> UNDEFINED."""
    r, phi = d.r, d.phi
    bits = np.where(phi < 0, 1, 0).astype(np.int8)
    bits[(r < r_min) | (phi == 0)] = UNDEFINED
    return bits


def complement(bits):
    bits = np.asarray(bits)
    return np.where(bits >= 0, 1 - bits, bits)


def rotating_frame_point(d: DemodResult):
    """Cartesian (X, Y) of the complex amplitude."""
    return d.amplitude.real.copy(), d.amplitude.imag.copy()


def delta_phi(phi1, phi2):
    """Circular distance between phases, in [0, pi]."""
    d = np.mod(np.abs(np.asarray(phi1, dtype=float) - np.asarray(phi2, dtype=float)), 2 * math.pi)
    out = np.minimum(d, 2 * math.pi - d)
    return float(out) if np.ndim(out) == 0 else out


@functools.lru_cache(maxsize=64)
def reference_amplitude(params, relax_periods: float = 60.0, steps_per_period: int = 512,
                        n_windows: int = 8) -> float:
    """Steady subharmonic amplitude of one uncoupled site at these parameters."""
    p1 = single_site(params)
    seed, _ = p1.reference_seeds()
    cfg = IntegrationConfig.for_model(p1, relax_periods, steps_per_period)
    traj = integrate(p1, None, SystemState(p1.kind, seed), cfg)
    return float(readout(traj, n_windows=n_windows).r[0])


@dataclass
class BasinMap:
    """Labels over a 2-D grid of initial conditions; ``labels[i, j]`` is at (x[i], y[j])."""

    frame: str
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def axis_names(self):
        return ("theta", "theta_dot") if self.frame == "lab" else ("X", "Y")

    def label_at(self, xv, yv) -> int:
        i = int(np.argmin(np.abs(self.x - xv)))
        j = int(np.argmin(np.abs(self.y - yv)))
        return int(self.labels[i, j])


def _basin_cells(params, seeds, t_final_periods, steps_per_period, r_min, threads,
                 n_windows=8):
    """Initial-window amplitude and final label for each single-site seed."""
    p1 = single_site(params)
    cfg = IntegrationConfig.for_model(p1, t_final_periods, steps_per_period)
    omega_R = subharmonic_frequency(p1)

    def run(seed):
        try:
            traj = integrate(p1, None, SystemState(p1.kind, [seed]), cfg)
        except NumericalError:
            return complex("nan"), UNDEFINED
        first = demodulate(traj, traj.times[0], omega_R).amplitude[0]
        bit = classify_bit(readout(traj, n_windows=n_windows), r_min)[0]
        return first, int(bit)

    res = parallel_map(run, [tuple(s) for s in seeds], threads)
    first = np.array([r[0] for r in res])
    labels = np.array([r[1] for r in res], dtype=np.int8)
    return first, labels


def _resolve_r_min(params, r_min, steps_per_period):
    if r_min is not None:
        return r_min
    return 0.05 * reference_amplitude(params, steps_per_period=steps_per_period)


def basin_scan_lab(params, theta, theta_dot, t_final_periods: float = 150.0,
                   steps_per_period: int = 512, r_min=None, threads=None) -> BasinMap:
    """Final bit of a single noiseless DPO for each lab-frame initial condition."""
    if params.kind != "dpo":
        raise ValueError("lab-frame basins are defined for the DPO")
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    r_min = _resolve_r_min(params, r_min, steps_per_period)
    tt, vv = np.meshgrid(theta, theta_dot, indexing="ij")
    seeds = np.stack([tt.ravel(), vv.ravel()], axis=1)
    _, labels = _basin_cells(params, seeds, t_final_periods, steps_per_period, r_min, threads)
    meta = {"t_final_periods": t_final_periods, "steps_per_period": steps_per_period,
            "r_min": r_min}
    return BasinMap("lab", theta, theta_dot, labels.reshape(tt.shape), meta)


def basin_scan_rotating(params, X, Y, seed_theta=(-math.pi, math.pi), seed_theta_dot=(-3.0, 3.0),
                        seed_count: int = 201, t_final_periods: float = 150.0,
                        steps_per_period: int = 512, r_min=None, threads=None) -> BasinMap:
    """Basins over the rotating-frame point reached during the first window [0, 2 T_d].

    Lab-frame seeds on a ``seed_count`` square grid are mapped to their
    initial demodulated point; each rotating cell takes the label of the
    nearest achieved point inside the cell, else ``UNREACHABLE``.
    """
    if params.kind != "dpo":
        raise ValueError("rotating-frame basins are defined for the DPO")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    r_min = _resolve_r_min(params, r_min, steps_per_period)
    th = np.linspace(*seed_theta, seed_count)
    vv = np.linspace(*seed_theta_dot, seed_count)
    tt, ww = np.meshgrid(th, vv, indexing="ij")
    seeds = np.stack([tt.ravel(), ww.ravel()], axis=1)
    first, seed_labels = _basin_cells(params, seeds, t_final_periods, steps_per_period, r_min,
                                      threads)
    ok = np.isfinite(first)
    pts = np.stack([first.real[ok], first.imag[ok]], axis=1)
    lab = seed_labels[ok]
    hx = np.diff(X).min() if X.size > 1 else np.inf
    hy = np.diff(Y).min() if Y.size > 1 else np.inf
    gx, gy = np.meshgrid(X, Y, indexing="ij")
    targets = np.stack([gx.ravel(), gy.ravel()], axis=1)
    tree = cKDTree(pts)
    _, idx = tree.query(targets)
    near = pts[idx]
    inside = (np.abs(near[:, 0] - targets[:, 0]) <= hx / 2) & (np.abs(near[:, 1] - targets[:, 1]) <= hy / 2)
    labels = np.where(inside, lab[idx], UNREACHABLE).astype(np.int8)
    meta = {
        "t_final_periods": t_final_periods,
        "steps_per_period": steps_per_period,
        "r_min": r_min,
        "seed_count": seed_count,
        "seed_theta": list(seed_theta),
        "seed_theta_dot": list(seed_theta_dot),
        "unreachable_fraction": float(np.mean(labels == UNREACHABLE)),
    }
    return BasinMap("rotating", X, Y, labels.reshape(gx.shape), meta)
