"""Fixed-step RK4 / stochastic Heun integration with piecewise-constant schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .models import RHS, SystemState, check_normal_phase, n_flat, noise_amplitudes

__all__ = [
    "Schedule",
    "ScheduleSet",
    "IntegrationConfig",
    "Trajectory",
    "NumericalError",
    "integrate",
    "schedule_value",
    "noise_stream",
    "derive_seed",
]

# two-level sampling requirement of the demodulator: >= 32 samples per
# subharmonic period
MIN_SAMPLES_PER_SUBHARMONIC = 32


class NumericalError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant profile over right-open segments ``[start, end)``."""

    segments: tuple[tuple[float, float, float], ...] = ()
    default: float = 0.0

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(v)) for a, b, v in self.segments)
        segs = tuple(sorted(segs))
        for a, b, _ in segs:
            if not a < b:
                raise ValueError(f"segment start {a} must precede end {b}")
        for (_, b0, _), (a1, _, _) in zip(segs, segs[1:]):
            if a1 < b0:
                raise ValueError("schedule segments overlap")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls((), value)

    @classmethod
    def pulse(cls, start: float, duration: float, height: float = 1.0, default: float = 0.0):
        if duration <= 0:
            return cls((), default)
        return cls(((start, start + duration, height),), default)

    @classmethod
    def switch_on(cls, at: float, value: float = 1.0, before: float = 0.0):
        return cls(((-math.inf, at, before),), value)

    def __call__(self, t: float) -> float:
        return schedule_value(self, t)


def schedule_value(s: Schedule, t: float) -> float:
    for a, b, v in s.segments:
        if a <= t < b:
            return v
    return s.default


@dataclass(frozen=True)
class ScheduleSet:
    """Per-edge coupling profiles and per-site drive gates.

    Edges are keyed by their endpoint pair; an unlisted edge carries its base
    coupling at all times, an unlisted site has its drive fully on.
    """

    edges: dict = field(default_factory=dict)
    sites: dict = field(default_factory=dict)

    def _edge_keys(self):
        return {tuple(sorted(k)): v for k, v in self.edges.items()}

    def check(self, topology):
        present = {tuple(sorted((e.i, e.k))) for e in topology.edges}
        for key in self._edge_keys():
            if key not in present:
                raise ValueError(f"schedule references missing edge {key}")
        for site in self.sites:
            if not 0 <= site < topology.n_sites:
                raise ValueError(f"schedule references missing site {site}")

    def channels(self, topology):
        """Schedules in kernel order: one per edge, then one per site."""
        self.check(topology)
        keyed = self._edge_keys()
        out = []
        for e in topology.edges:
            out.append(keyed.get(tuple(sorted((e.i, e.k))), Schedule.constant(1.0)))
        for l in range(topology.n_sites):
            out.append(self.sites.get(l, Schedule.constant(1.0)))
        return out

    def values_at(self, t, topology):
        ch = self.channels(topology)
        E = len(topology.edges)
        base = np.array([e.weight for e in topology.edges], dtype=np.float64)
        w = base * np.array([s(t) for s in ch[:E]], dtype=np.float64)
        gate = np.array([s(t) for s in ch[E:]], dtype=np.float64)
        return w, gate

    def pack(self, topology):
        ch = self.channels(topology)
        ptr = np.zeros(len(ch) + 1, dtype=np.int64)
        lo, hi, val = [], [], []
        for n, s in enumerate(ch):
            for a, b, v in s.segments:
                lo.append(a)
                hi.append(b)
                val.append(v)
            ptr[n + 1] = len(lo)
        default = np.array([s.default for s in ch], dtype=np.float64)
        as_arr = lambda x: np.array(x, dtype=np.float64).reshape(-1)
        return ptr, as_arr(lo), as_arr(hi), as_arr(val), default


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float
    t0: float
    tf: float
    sample_stride: int = 16
    rng_seed: int = 0
    noise_enabled_from: float = math.inf

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")

    @classmethod
    def for_model(cls, params, periods: float, steps_per_period: int = 512,
                  samples_per_subharmonic: int = 64, t0: float = 0.0, **kw):
        """Config spanning ``periods`` drive periods at ``steps_per_period``."""
        Td = 2.0 * math.pi / params.drive_frequency
        stride = (2 * steps_per_period) // samples_per_subharmonic
        if stride < 1 or (2 * steps_per_period) % samples_per_subharmonic:
            raise ValueError("samples_per_subharmonic must divide 2*steps_per_period")
        dt = Td / steps_per_period
        n = int(round(periods * steps_per_period))
        return cls(dt=dt, t0=t0, tf=t0 + n * dt, sample_stride=stride, **kw)

    @property
    def n_steps(self) -> int:
        return int(round((self.tf - self.t0) / self.dt))


@dataclass
class Trajectory:
    times: np.ndarray
    samples: np.ndarray  # (n_samples, n_flat)
    final: np.ndarray
    params: object
    config: IntegrationConfig
    max_normal_phase: float = 0.0

    @property
    def kind(self) -> str:
        return self.params.kind

    @property
    def sample_interval(self) -> float:
        return self.config.dt * self.config.sample_stride

    def observable(self, site=None) -> np.ndarray:
        """theta for the DPO, Re a for KPO and DLM; shape (n_samples,) or (n_samples, M)."""
        M = self.params.M
        obs = self.samples[:, :M]
        return obs if site is None else obs[:, site]

    def state(self, index: int) -> SystemState:
        return SystemState.from_flat(self.kind, self.samples[index])

    def final_state(self) -> SystemState:
        return SystemState.from_flat(self.kind, self.final)

    def __len__(self):
        return self.times.size


def derive_seed(*key) -> int:
    """64-bit seed from an integer key tuple, e.g. (base_seed, realization)."""
    ss = np.random.SeedSequence([int(k) for k in key])
    return int(ss.generate_state(1, np.uint64)[0])


def noise_stream(seed: int, site: int, component: int, n: int) -> np.ndarray:
    """The first ``n`` unit normals of the stream keyed by (seed, site, component).

    Position ``k`` in the stream is consumed by the ``k``-th noisy step, so a
    realization is independent of evaluation order and worker count.
    """
    rng = np.random.default_rng([int(seed), int(site), int(component)])
    return rng.standard_normal(n)


@nb.njit(cache=True, nogil=True)
def _eval_channels(t, ptr, lo, hi, val, default, base, w, gate):
    E = base.size
    for c in range(ptr.size - 1):
        v = default[c]
        for s in range(ptr[c], ptr[c + 1]):
            if lo[s] <= t < hi[s]:
                v = val[s]
                break
        if c < E:
            w[c] = base[c] * v
        else:
            gate[c - E] = v


@nb.njit(cache=True, nogil=True)
def _all_finite(y):
    for i in range(y.size):
        if not math.isfinite(y[i]):
            return False
    return True


@nb.njit(cache=True, nogil=True)
def _kernel(rhs, y0, t0, dt, n_steps, stride, c, ei, ek, base, ptr, lo, hi, val,
            default, k_noise, tgt, coef, normals, out):
    """Advance ``y0`` by ``n_steps``; returns the first failing step or -1.

    Steps with index >= k_noise take a Heun predictor-corrector step with the
    additive increments; earlier steps are plain RK4.
    """
    n = y0.size
    M = default.size - base.size
    y = y0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    dw = np.zeros(n)
    w = np.empty(base.size)
    gate = np.empty(M)
    sqdt = math.sqrt(dt)
    noisy = tgt.size > 0
    for k in range(n_steps):
        if k % stride == 0:
            out[k // stride, :] = y
        t = t0 + k * dt
        th = t + 0.5 * dt
        t1 = t0 + (k + 1) * dt
        _eval_channels(t, ptr, lo, hi, val, default, base, w, gate)
        rhs(t, y, c, ei, ek, w, gate, k1)
        if noisy and k >= k_noise:
            row = k - k_noise
            for i in range(n):
                dw[i] = 0.0
            for m in range(tgt.size):
                dw[tgt[m]] += coef[m] * sqdt * normals[m, row]
            for i in range(n):
                tmp[i] = y[i] + dt * k1[i] + dw[i]
            _eval_channels(t1, ptr, lo, hi, val, default, base, w, gate)
            rhs(t1, tmp, c, ei, ek, w, gate, k2)
            for i in range(n):
                y[i] += 0.5 * dt * (k1[i] + k2[i]) + dw[i]
        else:
            for i in range(n):
                tmp[i] = y[i] + 0.5 * dt * k1[i]
            _eval_channels(th, ptr, lo, hi, val, default, base, w, gate)
            rhs(th, tmp, c, ei, ek, w, gate, k2)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * dt * k2[i]
            rhs(th, tmp, c, ei, ek, w, gate, k3)
            for i in range(n):
                tmp[i] = y[i] + dt * k3[i]
            _eval_channels(t1, ptr, lo, hi, val, default, base, w, gate)
            rhs(t1, tmp, c, ei, ek, w, gate, k4)
            for i in range(n):
                y[i] += dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
        if not _all_finite(y):
            return k
    if n_steps % stride == 0:
        out[n_steps // stride, :] = y
    y0[:] = y
    return -1


def _noise_inputs(params, cfg, n_steps, noise):
    channel = noise if noise is not None else noise_amplitudes(params)
    empty = (n_steps, np.zeros(0, np.int64), np.zeros(0), np.zeros((0, 1)))
    if channel.is_zero or math.isinf(cfg.noise_enabled_from):
        return empty
    k_noise = max(0, int(math.ceil((cfg.noise_enabled_from - cfg.t0) / cfg.dt - 1e-9)))
    if k_noise >= n_steps:
        return empty
    target, site, comp, coef = channel.layout()
    keep = coef != 0
    target, site, comp, coef = target[keep], site[keep], comp[keep], coef[keep]
    rows = n_steps - k_noise
    normals = np.empty((target.size, rows))
    for m in range(target.size):
        normals[m] = noise_stream(cfg.rng_seed, site[m], comp[m], rows)
    return k_noise, target.astype(np.int64), coef, normals


def integrate(params, sched, init, cfg: IntegrationConfig, noise=None) -> Trajectory:
    """Integrate a model from ``init`` over ``[cfg.t0, cfg.tf]``.

    Noise is taken from ``noise_amplitudes(params)`` unless an explicit
    :class:`NoiseChannel` is passed; it is switched on from
    ``cfg.noise_enabled_from`` onward.
    """
    if isinstance(init, SystemState):
        if init.kind != params.kind:
            raise TypeError(f"initial state is {init.kind}, model is {params.kind}")
        y0 = init.to_flat()
    else:
        y0 = np.array(init, dtype=np.float64).reshape(-1)
    if y0.size != n_flat(params):
        raise ValueError(f"initial state has {y0.size} entries, expected {n_flat(params)}")
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state contains non-finite entries")

    n_steps = cfg.n_steps
    if abs(n_steps * cfg.dt - (cfg.tf - cfg.t0)) > 1e-9 * max(1.0, abs(cfg.tf)):
        raise ValueError("tf - t0 must be a whole number of steps")
    subperiod = 4.0 * math.pi / params.drive_frequency
    if cfg.dt * cfg.sample_stride > subperiod / MIN_SAMPLES_PER_SUBHARMONIC * (1 + 1e-12):
        raise ValueError("sample interval exceeds 1/32 of the subharmonic period")

    sched = sched if sched is not None else ScheduleSet()
    top = params.topology
    ptr, lo, hi, val, default = sched.pack(top)
    ei, ek, base = top.arrays()
    k_noise, tgt, coef, normals = _noise_inputs(params, cfg, n_steps, noise)

    n_samples = n_steps // cfg.sample_stride + 1
    out = np.empty((n_samples, y0.size))
    y = y0.copy()
    bad = _kernel(RHS[params.kind], y, float(cfg.t0), float(cfg.dt), n_steps,
                  cfg.sample_stride, params.constants(), ei, ek, base, ptr, lo, hi,
                  val, default, k_noise, tgt, coef, normals, out)
    if bad >= 0:
        t_bad = cfg.t0 + (bad + 1) * cfg.dt
        raise NumericalError(f"non-finite state at t={t_bad:.6g}", time=t_bad)
    times = cfg.t0 + np.arange(n_samples) * cfg.dt * cfg.sample_stride
    traj = Trajectory(times, out, y, params, cfg)
    traj.max_normal_phase = check_normal_phase(params, out)
    return traj
