"""Initialization, bit flip, NAND/NOR gates and the reset protocol.

Protocol-level durations (pulse length ``Tq``, relaxation times, offsets) are
measured in drive periods T_d of the model being simulated, which is the unit
used on every parameter-scan axis. Pulse edges are rounded to the step grid
and the rounded value is reported back.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import parallel_map
from .analysis import UNDEFINED, classify_bit, delta_phi, demodulate, readout
from .integrator import IntegrationConfig, Schedule, ScheduleSet, derive_seed, integrate
from .models import Edge, SystemState, Topology, drive_period, single_site, with_topology

__all__ = [
    "Numerics",
    "GateSpec",
    "GateOutcome",
    "TruthTableResult",
    "FlipOutcome",
    "ResetOutcome",
    "InitializationError",
    "ProtocolError",
    "site_calibration",
    "initialize_bits",
    "run_flip",
    "flip_outcome",
    "run_gate",
    "run_truth_table",
    "success_probability",
    "run_reset",
    "expected_output",
    "INPUT_CONFIGS",
    "SITE_I1",
    "SITE_I2",
    "SITE_O",
    "SITE_R",
]

log = logging.getLogger(__name__)

FULL = "Full"
PSEUDO = "Pseudo"
FAIL = "Fail"
_RANK = {FULL: 2, PSEUDO: 1, FAIL: 0}

SITE_I1, SITE_I2, SITE_O, SITE_R = 0, 1, 2, 3
INPUT_CONFIGS = ((0, 0), (0, 1), (1, 0), (1, 1))
GATE_KINDS = ("NAND", "NOR")
# a relaxed amplitude below this fraction of the seed's amplitude means the
# oscillation died instead of locking onto the subharmonic
DECAY_RATIO = 1e-2


class InitializationError(RuntimeError):
    """A site did not relax to its target bit before the pulse."""


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Numerics:
    """Numerical knobs shared by all protocols."""

    steps_per_period: int = 512
    samples_per_subharmonic: int = 64
    readout_windows: int = 8
    r_min_fraction: float = 0.05

    def __post_init__(self):
        if self.steps_per_period < 16:
            raise ValueError("steps_per_period must be >= 16")
        if self.readout_windows < 1:
            raise ValueError("readout_windows must be >= 1")


@dataclass(frozen=True)
class GateSpec:
    kind: str
    inputs: tuple = (1, 1)
    coupling: float = 0.0
    Tq: float = 1.0
    relax_before: float = 60.0
    relax_after: float = 100.0
    pulse_offset: float = 0.0

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ("NAND", "NOR", "FLIP", "RESET"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "inputs", tuple(int(b) for b in self.inputs))
        if any(b not in (0, 1) for b in self.inputs):
            raise ValueError("inputs must be bits")
        if self.Tq < 0:
            raise ValueError("Tq must be >= 0")
        if self.relax_before < 0 or self.relax_after < 0:
            raise ValueError("relaxation times must be >= 0")
        if self.pulse_offset < 0:
            raise ValueError("pulse_offset must be >= 0")

    @property
    def t_p(self) -> float:
        """Pulse onset in drive periods."""
        return self.relax_before + self.pulse_offset


@dataclass
class GateOutcome:
    kind: str
    inputs: tuple
    output: int
    expected: int
    bits_before: tuple
    bits_after: tuple
    input_flipped: tuple
    classification: str
    phases_before: tuple
    phases_after: tuple
    Tq_rounded: float
    seed: int | None = None
    trajectory: object = field(default=None, repr=False)

    @property
    def correct(self) -> bool:
        return self.output == self.expected

    def to_record(self) -> dict:
        rec = asdict(self)
        rec.pop("trajectory")
        return rec


@dataclass
class TruthTableResult:
    kind: str
    coupling: float
    Tq_rounded: float
    outcomes: dict
    classification: str
    seed: int | None = None

    @property
    def all_correct(self) -> bool:
        return all(o.correct for o in self.outcomes.values())

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "coupling": self.coupling,
            "Tq_rounded": self.Tq_rounded,
            "classification": self.classification,
            "seed": self.seed,
            "rows": [self.outcomes[c].to_record() for c in INPUT_CONFIGS],
        }


@dataclass
class FlipOutcome:
    success: bool
    bits_before: tuple
    bits_after: tuple
    Tq_rounded: float


@dataclass
class ResetOutcome:
    delta_phi: float
    output_bit: int
    reference_bit: int
    phases: tuple
    Tq_rounded: float


@dataclass(frozen=True)
class Calibration:
    seeds: dict  # bit -> single-site SystemState
    amplitude: float
    r_min: float


@functools.lru_cache(maxsize=64)
def site_calibration(params, relax_periods: float = 60.0, numerics: Numerics = Numerics()):
    """Assign the model's two reference seeds to bits and fix r_min.

    Both seeds are relaxed on an isolated, noiseless site; the seed whose
    phase comes out negative is the 1-bit.
    """
    p1 = single_site(params)
    seed_a, seed_b = p1.reference_seeds()
    cfg = IntegrationConfig.for_model(p1, relax_periods, numerics.steps_per_period,
                                      numerics.samples_per_subharmonic)
    results = []
    for s in (seed_a, seed_b):
        traj = integrate(p1, None, SystemState(p1.kind, s), cfg)
        results.append(readout(traj, n_windows=numerics.readout_windows))
        initial = float(demodulate(traj, traj.times[0]).r[0])
        if results[-1].r[0] < DECAY_RATIO * initial:
            raise InitializationError(
                f"subharmonic amplitude decayed from {initial:.3g} to {results[-1].r[0]:.3g}; "
                "no period-doubled state at these parameters"
            )
    amplitude = float(results[0].r[0])
    r_min = numerics.r_min_fraction * amplitude
    bits = [int(classify_bit(d, r_min)[0]) for d in results]
    if sorted(bits) != [0, 1]:
        raise InitializationError(
            f"reference seeds relax to bits {bits}; the model shows no pair of "
            "symmetry-broken period-doubled states at these parameters"
        )
    seeds = {bits[0]: SystemState(p1.kind, seed_a), bits[1]: SystemState(p1.kind, seed_b)}
    return Calibration(seeds, amplitude, r_min)


def _seeded_state(params, bits, calib, at_rest=()):
    rows = []
    for site, b in enumerate(bits):
        v = calib.seeds[b].values[0]
        rows.append(np.zeros_like(v) if site in at_rest else v)
    return SystemState(params.kind, np.array(rows))


@dataclass(frozen=True)
class _Timing:
    dt: float
    k_pulse: int
    k_len: int
    k_total: int
    steps_per_period: int

    @property
    def t_p(self):
        return self.k_pulse * self.dt

    @property
    def t_end_pulse(self):
        return (self.k_pulse + self.k_len) * self.dt

    @property
    def Tq_rounded(self):
        return self.k_len / self.steps_per_period


def _timing(params, Tq, t_p_periods, relax_after, numerics):
    spp = numerics.steps_per_period
    stride = (2 * spp) // numerics.samples_per_subharmonic
    dt = drive_period(params) / spp
    k_pulse = int(round(t_p_periods * spp))
    k_len = int(round(Tq * spp))
    k_total = k_pulse + k_len + int(round(relax_after * spp))
    # keep the end on the sample grid so that the last window is complete
    k_total += (-k_total) % stride
    return _Timing(dt, k_pulse, k_len, k_total, spp)


def _pulse(timing):
    if timing.k_len == 0:
        return Schedule.constant(0.0)
    return Schedule(((timing.t_p, timing.t_end_pulse, 1.0),), 0.0)


def _integrate_protocol(params, init, sched, timing, numerics, seed, noise):
    stride = (2 * numerics.steps_per_period) // numerics.samples_per_subharmonic
    cfg = IntegrationConfig(
        dt=timing.dt,
        t0=0.0,
        tf=timing.k_total * timing.dt,
        sample_stride=stride,
        rng_seed=0 if seed is None else int(seed),
        noise_enabled_from=timing.t_p if noise else math.inf,
    )
    return integrate(params, sched, init, cfg)


def _bits_and_phases(traj, end, r_min, numerics):
    d = readout(traj, end=end, n_windows=numerics.readout_windows)
    return tuple(int(b) for b in classify_bit(d, r_min)), tuple(float(p) for p in d.phi)


def initialize_bits(params, targets, relax: float = 60.0, numerics: Numerics = Numerics()):
    """Relax the uncoupled, noiseless network into ``targets``.

    Returns the relaxed :class:`SystemState` and the verified bits. Raises
    :class:`InitializationError` when a site ends in the wrong or no bit.
    """
    targets = tuple(int(b) for b in targets)
    if len(targets) != params.M:
        raise ValueError(f"need {params.M} target bits, got {len(targets)}")
    if any(b not in (0, 1) for b in targets):
        raise ValueError("targets must be 0 or 1")
    calib = site_calibration(params, relax, numerics)
    init = _seeded_state(params, targets, calib)
    off = ScheduleSet(edges={(e.i, e.k): Schedule.constant(0.0) for e in params.topology.edges})
    timing = _timing(params, 0.0, relax, 0.0, numerics)
    traj = _integrate_protocol(params, init, off, timing, numerics, None, False)
    bits, _ = _bits_and_phases(traj, None, calib.r_min, numerics)
    if bits != targets:
        raise InitializationError(f"sites relaxed to {bits}, targets {targets}")
    return traj.final_state(), bits


def expected_output(kind: str, inputs) -> int:
    i1, i2 = inputs
    if kind == "NAND":
        return 1 - (i1 & i2)
    if kind == "NOR":
        return 1 - (i1 | i2)
    raise ValueError(f"no truth table for {kind}")


def _pair_couplings(coupling):
    if np.ndim(coupling) == 0:
        return float(coupling), float(coupling)
    c1, c2 = coupling
    return float(c1), float(c2)


def _classify(correct, flipped):
    if not correct:
        return FAIL
    return PSEUDO if any(flipped) else FULL


def run_gate(params, spec: GateSpec, numerics: Numerics = Numerics(), seed=None,
             noise: bool = False, keep_trajectory: bool = False,
             output_init=None) -> GateOutcome:
    """One NAND/NOR execution on the star I1-O, I2-O, R-O.

    O starts in 1 (NAND) or 0 (NOR) unless ``output_init`` overrides it; R
    copies O's initial bit and stays uncoupled. A single pulse of height
    ``spec.coupling`` is applied to both input edges for ``spec.Tq`` periods.
    """
    if spec.kind not in GATE_KINDS:
        raise ValueError(f"run_gate handles NAND/NOR, got {spec.kind}")
    o_bit = (1 if spec.kind == "NAND" else 0) if output_init is None else int(output_init)
    i1, i2 = spec.inputs
    c1, c2 = _pair_couplings(spec.coupling)
    top = Topology(4, (Edge(SITE_I1, SITE_O, c1), Edge(SITE_I2, SITE_O, c2),
                       Edge(SITE_R, SITE_O, 0.0)))
    net = with_topology(params, top)
    calib = site_calibration(params, spec.relax_before, numerics)
    timing = _timing(net, spec.Tq, spec.t_p, spec.relax_after, numerics)
    pulse = _pulse(timing)
    sched = ScheduleSet(edges={
        (SITE_I1, SITE_O): pulse,
        (SITE_I2, SITE_O): pulse,
        (SITE_R, SITE_O): Schedule.constant(0.0),
    })
    targets = (i1, i2, o_bit, o_bit)
    init = _seeded_state(net, targets, calib)
    traj = _integrate_protocol(net, init, sched, timing, numerics, seed, noise)
    before, ph_before = _bits_and_phases(traj, timing.t_p, calib.r_min, numerics)
    if before != targets:
        raise InitializationError(f"pre-pulse bits {before}, targets {targets}")
    after, ph_after = _bits_and_phases(traj, None, calib.r_min, numerics)
    expected = expected_output(spec.kind, (i1, i2))
    flipped = (after[SITE_I1] != i1, after[SITE_I2] != i2)
    correct = after[SITE_O] == expected
    if UNDEFINED in after:
        log.debug("undefined readout %s at coupling=%s Tq=%s", after, spec.coupling, spec.Tq)
    return GateOutcome(
        kind=spec.kind,
        inputs=(i1, i2),
        output=after[SITE_O],
        expected=expected,
        bits_before=before,
        bits_after=after,
        input_flipped=flipped,
        classification=_classify(correct, flipped),
        phases_before=ph_before,
        phases_after=ph_after,
        Tq_rounded=timing.Tq_rounded,
        seed=seed,
        trajectory=traj if keep_trajectory else None,
    )


def run_truth_table(params, kind: str, coupling, Tq: float, numerics: Numerics = Numerics(),
                    seed=None, noise: bool = False, relax_before: float = 60.0,
                    relax_after: float = 100.0, pulse_offset: float = 0.0) -> TruthTableResult:
    """All four input configurations under one noise realization."""
    kind = kind.upper()
    outcomes = {}
    for cfg in INPUT_CONFIGS:
        spec = GateSpec(kind, cfg, coupling, Tq, relax_before, relax_after, pulse_offset)
        outcomes[cfg] = run_gate(params, spec, numerics, seed=seed, noise=noise)
    rank = min(_RANK[o.classification] for o in outcomes.values())
    label = {v: k for k, v in _RANK.items()}[rank]
    Tq_r = outcomes[INPUT_CONFIGS[0]].Tq_rounded
    return TruthTableResult(kind, coupling, Tq_r, outcomes, label, seed)


def success_probability(params, kind: str, coupling, Tq: float, n_realizations: int = 20,
                        base_seed: int = 0, count_pseudo: bool = True,
                        numerics: Numerics = Numerics(), threads=None, **timing) -> float:
    """Fraction of noise realizations whose truth table is correct.

    Realization ``k`` uses the seed derived from ``(base_seed, k)``. With
    ``count_pseudo=False`` only gates that leave the inputs intact count.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")

    def one(k):
        tt = run_truth_table(params, kind, coupling, Tq, numerics,
                             seed=derive_seed(base_seed, k), noise=True, **timing)
        if count_pseudo:
            return tt.classification in (FULL, PSEUDO)
        return tt.classification == FULL

    hits = parallel_map(one, range(n_realizations), threads)
    return sum(hits) / n_realizations


def flip_outcome(params, coupling: float, Tq: float, bit: int = 1,
                 numerics: Numerics = Numerics(), seed=None, noise: bool = False,
                 relax_before: float = 60.0, relax_after: float = 100.0,
                 pulse_offset: float = 0.0) -> FlipOutcome:
    """Pulse two in-phase sites and report whether both end complemented."""
    net = with_topology(params, Topology(2, (Edge(0, 1, float(coupling)),)))
    calib = site_calibration(params, relax_before, numerics)
    timing = _timing(net, Tq, relax_before + pulse_offset, relax_after, numerics)
    sched = ScheduleSet(edges={(0, 1): _pulse(timing)})
    targets = (bit, bit)
    traj = _integrate_protocol(net, _seeded_state(net, targets, calib), sched, timing, numerics,
                               seed, noise)
    before, _ = _bits_and_phases(traj, timing.t_p, calib.r_min, numerics)
    if before != targets:
        raise InitializationError(f"pre-pulse bits {before}, targets {targets}")
    after, _ = _bits_and_phases(traj, None, calib.r_min, numerics)
    if UNDEFINED in after:
        log.info("flip readout undefined at coupling=%s Tq=%s", coupling, Tq)
    success = after == (1 - bit, 1 - bit)
    return FlipOutcome(success, before, after, timing.Tq_rounded)


def run_flip(params, coupling: float, Tq: float, **kw) -> bool:
    return flip_outcome(params, coupling, Tq, **kw).success


def run_reset(params, j_R: float, Tq_reset: float, reference_bit: int = 1, output_init=None,
              quench: float = 100.0, numerics: Numerics = Numerics(), seed=None,
              noise: bool = False, relax_before: float = 60.0,
              relax_after: float = 100.0) -> ResetOutcome:
    """Re-drive a dead output site while pulsing its coupling to a reference.

    Site 0 is the output O, site 1 the reference R. With ``output_init=None``
    O starts at rest with its drive gated off; otherwise it first holds
    ``output_init`` and is quenched (drive off) for ``quench`` periods. At the
    pulse onset O's drive is restored and the O-R coupling pulses for
    ``Tq_reset`` periods.
    """
    net = with_topology(params, Topology(2, (Edge(0, 1, float(j_R)),)))
    calib = site_calibration(params, relax_before, numerics)
    Td = drive_period(net)
    if output_init is None:
        t_p = relax_before
        t_off = -math.inf
        o_seed = reference_bit
        at_rest = (0,)
    else:
        t_p = relax_before + quench
        t_off = relax_before
        o_seed = int(output_init)
        at_rest = ()
    timing = _timing(net, Tq_reset, t_p, relax_after, numerics)
    k_off = -math.inf if math.isinf(t_off) else round(t_off * timing.steps_per_period) * timing.dt
    o_gate = Schedule(((k_off, timing.t_p, 0.0),), 1.0) if math.isfinite(k_off) else \
        Schedule.switch_on(timing.t_p)
    sched = ScheduleSet(
        edges={(0, 1): _pulse(timing)},
        sites={0: o_gate},
    )
    init = _seeded_state(net, (o_seed, reference_bit), calib, at_rest=at_rest)
    traj = _integrate_protocol(net, init, sched, timing, numerics, seed, noise)
    d0 = readout(traj, end=timing.t_p, n_windows=numerics.readout_windows)
    if d0.r[0] >= calib.r_min:
        raise ProtocolError(
            f"output amplitude {d0.r[0]:.3g} has not decayed below r_min={calib.r_min:.3g} "
            f"after {quench} quench periods (T_d={Td:.4g})"
        )
    if int(classify_bit(d0, calib.r_min)[1]) != reference_bit:
        raise InitializationError("reference site lost its bit before the reset pulse")
    d = readout(traj, n_windows=numerics.readout_windows)
    bits = classify_bit(d, calib.r_min)
    if bits[0] == UNDEFINED:
        raise ProtocolError("output did not re-enter a period-doubled state")
    return ResetOutcome(
        delta_phi=delta_phi(d.phi[0], d.phi[1]),
        output_bit=int(bits[0]),
        reference_bit=int(bits[1]),
        phases=(float(d.phi[0]), float(d.phi[1])),
        Tq_rounded=timing.Tq_rounded,
    )
