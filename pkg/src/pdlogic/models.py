"""Model parameters, drift fields and noise channels.

Every model is integrated as a flat real vector whose first ``M`` entries are
the demodulated observable of each site:

* DPO: ``[theta_0..theta_{M-1}, thetadot_0..thetadot_{M-1}]``
* KPO: ``[Re a_0.., Im a_0..]``
* DLM: ``[Re a_0.., Im a_0.., Re b_0.., Im b_0..]``

The ``_*_rhs`` kernels are numba-compiled and shared by the integrator and by
the public ``*_drift`` helpers, so there is a single implementation of each
equation of motion.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numba as nb
import numpy as np

__all__ = [
    "Edge",
    "Topology",
    "DpoParams",
    "KpoParams",
    "DlmParams",
    "ModelParams",
    "SystemState",
    "NoiseChannel",
    "NormalPhaseWarning",
    "dpo_drift",
    "kpo_drift",
    "dlm_drift",
    "drift",
    "noise_amplitudes",
    "lambda_critical",
    "LAMBDA_C_PRINTED",
    "LAMBDA_C_STANDARD",
]

LAMBDA_C_PRINTED = "printed"
LAMBDA_C_STANDARD = "standard"

# |b|^2/N above this leaves the regime where the truncated spin expansion holds
NORMAL_PHASE_LIMIT = 0.5


class NormalPhaseWarning(RuntimeWarning):
    """Raised when a DLM run leaves the small-|b|^2/N regime."""


@dataclass(frozen=True)
class Edge:
    i: int
    k: int
    weight: float = 1.0


@dataclass(frozen=True)
class Topology:
    """Undirected weighted coupling graph.

    Each edge is stored once and acts symmetrically on both endpoints. The
    weight is the base coupling in the model's own units (``j`` for the DPO,
    ``J`` for KPO/DLM); schedules multiply it by a dimensionless profile.
    """

    n_sites: int
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        seen = set()
        for e in self.edges:
            if e.i == e.k:
                raise ValueError(f"self-edge on site {e.i}")
            if not (0 <= e.i < self.n_sites and 0 <= e.k < self.n_sites):
                raise ValueError(f"edge ({e.i}, {e.k}) outside 0..{self.n_sites - 1}")
            key = (min(e.i, e.k), max(e.i, e.k))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)

    @classmethod
    def isolated(cls, n_sites: int) -> "Topology":
        return cls(n_sites, ())

    @classmethod
    def chain(cls, n_sites: int, coupling: float) -> "Topology":
        """Open nearest-neighbour chain; absent neighbours contribute nothing."""
        return cls(n_sites, tuple(Edge(l, l + 1, coupling) for l in range(n_sites - 1)))

    @classmethod
    def star(cls, center: int, leaves, n_sites: int, weights=None) -> "Topology":
        leaves = tuple(leaves)
        if weights is None:
            weights = (1.0,) * len(leaves)
        return cls(n_sites, tuple(Edge(l, center, w) for l, w in zip(leaves, weights)))

    def edge_index(self, i: int, k: int) -> int:
        for n, e in enumerate(self.edges):
            if (e.i, e.k) in ((i, k), (k, i)):
                return n
        raise KeyError(f"no edge between {i} and {k}")

    def arrays(self):
        ei = np.array([e.i for e in self.edges], dtype=np.int64)
        ek = np.array([e.k for e in self.edges], dtype=np.int64)
        w = np.array([e.weight for e in self.edges], dtype=np.float64)
        return ei, ek, w


def _check_topology(topology, n_sites):
    if topology is None:
        return Topology.isolated(n_sites)
    if topology.n_sites != n_sites:
        raise ValueError(f"topology has {topology.n_sites} sites, params declare {n_sites}")
    return topology


@dataclass(frozen=True)
class DpoParams:
    """Driven damped pendulum network, all rates in units where Omega sets the scale.

    ``T_tilde`` is the dimensionless bath temperature k_B T / (m L^2 Omega^2).
    """

    Omega: float
    A: float
    Omega_d: float
    gamma: float
    T_tilde: float = 0.0
    M: int = 1
    topology: Topology = None

    kind = "dpo"
    components_per_site = 2

    def __post_init__(self):
        if not self.Omega > 0:
            raise ValueError("Omega must be > 0")
        if not self.Omega_d > 0:
            raise ValueError("Omega_d must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.T_tilde < 0:
            raise ValueError("T_tilde must be >= 0")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        object.__setattr__(self, "topology", _check_topology(self.topology, self.M))

    @property
    def drive_frequency(self) -> float:
        return self.Omega_d

    def constants(self) -> np.ndarray:
        return np.array([self.Omega, self.A, self.Omega_d, self.gamma], dtype=np.float64)

    def reference_seeds(self):
        """Single-site seeds whose relaxed bits are complementary."""
        ref = np.array([[0.5, 0.0]])
        return ref, -ref


@dataclass(frozen=True)
class KpoParams:
    """Kerr parametric oscillator network with pump p0(1 + A0 sin(omega_mod t)).

    Fields are written in the rescaled TWA variables, so the drift does not
    depend on ``N``; ``N`` only sets the quantum-noise strength.
    """

    Delta: float
    chi: float
    p0: float
    A0: float
    omega_mod: float
    kappa: float
    J: float = 0.0
    N: float = math.inf
    M: int = 1
    topology: Topology = None

    kind = "kpo"
    components_per_site = 2

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not self.N > 0:
            raise ValueError("N must be > 0")
        if not self.omega_mod > 0:
            raise ValueError("omega_mod must be > 0")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        top = self.topology if self.topology is not None else Topology.chain(self.M, self.J)
        object.__setattr__(self, "topology", _check_topology(top, self.M))

    @property
    def drive_frequency(self) -> float:
        return self.omega_mod

    def constants(self) -> np.ndarray:
        return np.array(
            [self.Delta, self.chi, self.p0, self.A0, self.omega_mod, self.kappa],
            dtype=np.float64,
        )

    def reference_seeds(self):
        return np.array([0.1 + 0j]), np.array([0.1j])


@dataclass(frozen=True)
class DlmParams:
    """Dicke lattice in the Holstein-Primakoff normal-phase expansion.

    Fields are in unscaled units: the nonlinear corrections carry 1/(2N) and
    the photon noise has fixed strength kappa.
    """

    omega: float
    omega0: float
    lambda0: float
    A1: float
    omega_d: float
    kappa: float
    J: float = 0.0
    N: float = 1000.0
    M: int = 1
    topology: Topology = None
    lambda_c_form: str = LAMBDA_C_PRINTED

    kind = "dlm"
    components_per_site = 4

    def __post_init__(self):
        if not (self.omega > 0 and self.omega0 > 0):
            raise ValueError("omega and omega0 must be > 0")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not self.N > 0:
            raise ValueError("N must be > 0")
        if not self.omega_d > 0:
            raise ValueError("omega_d must be > 0")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.lambda_c_form not in (LAMBDA_C_PRINTED, LAMBDA_C_STANDARD):
            raise ValueError(f"unknown lambda_c_form {self.lambda_c_form!r}")
        lc = lambda_critical(self)
        if not abs(self.lambda0) < lc:
            raise ValueError(
                f"lambda0={self.lambda0} is not below lambda_c={lc:.6g}; "
                "the normal-phase expansion does not apply"
            )
        top = self.topology if self.topology is not None else Topology.chain(self.M, self.J)
        object.__setattr__(self, "topology", _check_topology(top, self.M))

    @property
    def drive_frequency(self) -> float:
        return self.omega_d

    def constants(self) -> np.ndarray:
        return np.array(
            [self.omega, self.omega0, self.lambda0, self.A1, self.omega_d, self.kappa, self.N],
            dtype=np.float64,
        )

    def reference_seeds(self):
        return np.array([[0.1 + 0j, 0.1 + 0j]]), np.array([[0.1j, 0.1j]])


ModelParams = Union[DpoParams, KpoParams, DlmParams]


def drive_period(params) -> float:
    return 2.0 * math.pi / params.drive_frequency


def subharmonic_frequency(params) -> float:
    """Frequency of the period-doubled response, half the modulation frequency."""
    return 0.5 * params.drive_frequency


def with_topology(params, topology: Topology):
    return dataclasses.replace(params, M=topology.n_sites, topology=topology)


def single_site(params):
    return with_topology(params, Topology.isolated(1))


def n_flat(params) -> int:
    return params.components_per_site * params.M


def lambda_critical(params, form: str | None = None) -> float:
    """Normal/superradiant threshold of the uncoupled open Dicke model.

    ``form="printed"`` evaluates ``0.5*sqrt(omega0/omega*(kappa + omega**2))``;
    ``form="standard"`` uses ``kappa**2`` in place of ``kappa``. The two agree
    at kappa = 0 and kappa = 1.
    """
    if not params.omega > 0:
        raise ValueError("omega must be > 0")
    form = form or getattr(params, "lambda_c_form", LAMBDA_C_PRINTED)
    if form == LAMBDA_C_PRINTED:
        loss = params.kappa
    elif form == LAMBDA_C_STANDARD:
        loss = params.kappa**2
    else:
        raise ValueError(f"unknown lambda_c form {form!r}")
    return 0.5 * math.sqrt(params.omega0 / params.omega * (loss + params.omega**2))


@dataclass(frozen=True)
class SystemState:
    """Network state in natural form.

    ``values`` has shape (M, 2) real [theta, thetadot] for the DPO, (M,)
    complex for the KPO and (M, 2) complex [a, b] for the DLM.
    """

    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        expected = {"dpo": 2, "kpo": 1, "dlm": 2}
        if self.kind not in expected:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "kpo":
            v = v.astype(np.complex128).reshape(-1)
        elif self.kind == "dlm":
            v = v.astype(np.complex128).reshape(-1, 2)
        else:
            if np.iscomplexobj(v):
                raise ValueError("DPO state must be real")
            v = v.astype(np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(v)):
            raise ValueError("state contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n_sites(self) -> int:
        return self.values.shape[0]

    def to_flat(self) -> np.ndarray:
        v = self.values
        if self.kind == "dpo":
            return np.concatenate([v[:, 0], v[:, 1]])
        if self.kind == "kpo":
            return np.concatenate([v.real, v.imag])
        return np.concatenate([v[:, 0].real, v[:, 0].imag, v[:, 1].real, v[:, 1].imag])

    @classmethod
    def from_flat(cls, kind: str, y: np.ndarray) -> "SystemState":
        y = np.asarray(y, dtype=np.float64)
        if kind == "dpo":
            M = y.size // 2
            return cls(kind, np.stack([y[:M], y[M:]], axis=1))
        if kind == "kpo":
            M = y.size // 2
            return cls(kind, y[:M] + 1j * y[M:])
        M = y.size // 4
        a = y[:M] + 1j * y[M : 2 * M]
        b = y[2 * M : 3 * M] + 1j * y[3 * M :]
        return cls(kind, np.stack([a, b], axis=1))

    def __neg__(self):
        return SystemState(self.kind, -self.values)


# --------------------------------------------------------------------------
# compiled right-hand sides
#
# Signature shared by all models:
#   rhs(t, y, consts, edge_i, edge_k, edge_w, gate, out)
# edge_w holds the instantaneous coupling of each edge, gate the per-site
# modulation factor in [0, 1]. ``out`` is overwritten.
# --------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _dpo_rhs(t, y, c, ei, ek, w, gate, out):
    M = gate.size
    omega2 = c[0] * c[0]
    drive = c[1] * math.cos(c[2] * t)
    gamma = c[3]
    for l in range(M):
        out[l] = y[M + l]
        out[M + l] = -omega2 * (1.0 - gate[l] * drive) * math.sin(y[l]) - gamma * y[M + l]
    for e in range(ei.size):
        i = ei[e]
        k = ek[e]
        out[M + i] += w[e] * y[k]
        out[M + k] += w[e] * y[i]


@nb.njit(cache=True, nogil=True)
def _kpo_rhs(t, y, c, ei, ek, w, gate, out):
    # da/dt = -i F - kappa a,  F = -Delta a - chi |a|^2 a + p a* - sum_k J_lk a_k
    M = gate.size
    delta = c[0]
    chi = c[1]
    mod = c[3] * math.sin(c[4] * t)
    kappa = c[5]
    for l in range(M):
        ar = y[l]
        ai = y[M + l]
        n = ar * ar + ai * ai
        p = c[2] * (1.0 + gate[l] * mod)
        # (Re F, Im F) stored temporarily in out
        out[l] = -delta * ar - chi * n * ar + p * ar
        out[M + l] = -delta * ai - chi * n * ai - p * ai
    for e in range(ei.size):
        i = ei[e]
        k = ek[e]
        out[i] -= w[e] * y[k]
        out[M + i] -= w[e] * y[M + k]
        out[k] -= w[e] * y[i]
        out[M + k] -= w[e] * y[M + i]
    for l in range(M):
        fr = out[l]
        fi = out[M + l]
        out[l] = fi - kappa * y[l]
        out[M + l] = -fr - kappa * y[M + l]


@nb.njit(cache=True, nogil=True)
def _dlm_rhs(t, y, c, ei, ek, w, gate, out):
    # i da/dt = omega a + lam (b + b*)(1 - |b|^2/2N) - sum J a' - i kappa a
    # i db/dt = omega0 b + lam (a + a*)(1 - (2|b|^2 + b^2)/2N)
    M = gate.size
    omega = c[0]
    omega0 = c[1]
    mod = c[3] * math.sin(c[4] * t)
    kappa = c[5]
    inv2n = 0.5 / c[6]
    for l in range(M):
        ar = y[l]
        ai = y[M + l]
        br = y[2 * M + l]
        bi = y[3 * M + l]
        lam = c[2] * (1.0 + gate[l] * mod)
        nb2 = br * br + bi * bi
        g_re = omega * ar + 2.0 * lam * br * (1.0 - nb2 * inv2n)
        g_im = omega * ai
        c2_re = 1.0 - (2.0 * nb2 + br * br - bi * bi) * inv2n
        c2_im = -2.0 * br * bi * inv2n
        h_re = omega0 * br + 2.0 * lam * ar * c2_re
        h_im = omega0 * bi + 2.0 * lam * ar * c2_im
        out[l] = g_re
        out[M + l] = g_im
        out[2 * M + l] = h_im
        out[3 * M + l] = -h_re
    for e in range(ei.size):
        i = ei[e]
        k = ek[e]
        out[i] -= w[e] * y[k]
        out[M + i] -= w[e] * y[M + k]
        out[k] -= w[e] * y[i]
        out[M + k] -= w[e] * y[M + i]
    for l in range(M):
        gr = out[l]
        gi = out[M + l]
        out[l] = gi - kappa * y[l]
        out[M + l] = -gr - kappa * y[M + l]


RHS = {"dpo": _dpo_rhs, "kpo": _kpo_rhs, "dlm": _dlm_rhs}


def _evaluate(params, state, t, sched, kind):
    if not isinstance(state, SystemState) or state.kind != kind:
        raise TypeError(f"expected a {kind.upper()} SystemState")
    if params.kind != kind:
        raise TypeError(f"expected {kind.upper()} parameters, got {params.kind.upper()}")
    if state.n_sites != params.M:
        raise ValueError(f"state has {state.n_sites} sites, params have {params.M}")
    # local import: integrator imports this module
    from .integrator import ScheduleSet

    sched = sched if sched is not None else ScheduleSet()
    w, gate = sched.values_at(t, params.topology)
    y = state.to_flat()
    out = np.empty_like(y)
    ei, ek, _ = params.topology.arrays()
    RHS[kind](float(t), y, params.constants(), ei, ek, w, gate, out)
    return SystemState.from_flat(kind, out)


def dpo_drift(state: SystemState, t: float, params: DpoParams, sched=None) -> SystemState:
    """Time derivative (thetadot, thetaddot) of a DPO network, noise excluded."""
    return _evaluate(params, state, t, sched, "dpo")


def kpo_drift(state: SystemState, t: float, params: KpoParams, sched=None) -> SystemState:
    """Mean-field da/dt of a KPO network (dissipative damping sign)."""
    return _evaluate(params, state, t, sched, "kpo")


def dlm_drift(state: SystemState, t: float, params: DlmParams, sched=None) -> SystemState:
    """Mean-field (da/dt, db/dt) of a Dicke lattice."""
    return _evaluate(params, state, t, sched, "dlm")


def drift(state, t, params, sched=None) -> SystemState:
    return _evaluate(params, state, t, sched, params.kind)


@dataclass(frozen=True)
class NoiseChannel:
    """Additive white noise acting on one block of the flat state.

    ``kind="real"`` adds ``amplitude * dW`` to thetadot. ``kind="complex"``
    adds ``-i * amplitude * dxi`` to the photon amplitude, with dxi a complex
    Wiener increment normalised to <dxi* dxi> = dt.
    """

    amplitude: np.ndarray = field(repr=False)
    kind: str

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=np.float64).reshape(-1)
        if np.any(amp < 0) or not np.all(np.isfinite(amp)):
            raise ValueError("noise amplitude must be finite and >= 0")
        if self.kind not in ("real", "complex"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        object.__setattr__(self, "amplitude", amp)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.amplitude > 0)

    def layout(self):
        """Map flat state entries onto independent unit normal sources.

        Returns ``(target, site, component, coef)``: entry ``target[n]`` of the
        state receives ``coef[n] * sqrt(dt) * z`` where ``z`` is the normal
        drawn from the stream keyed by ``(site[n], component[n])``.
        """
        M = self.amplitude.size
        sites = np.arange(M, dtype=np.int64)
        if self.kind == "real":
            return M + sites, sites, np.zeros(M, np.int64), self.amplitude.copy()
        # -i (z0 + i z1)/sqrt(2) = (z1 - i z0)/sqrt(2)
        s = self.amplitude / math.sqrt(2.0)
        target = np.concatenate([sites, M + sites])
        site = np.concatenate([sites, sites])
        comp = np.concatenate([np.ones(M, np.int64), np.zeros(M, np.int64)])
        return target, site, comp, np.concatenate([s, -s])


def noise_amplitudes(params) -> NoiseChannel:
    """Noise channel implied by the model's bath (T_tilde) or particle number (N)."""
    M = params.M
    if params.kind == "dpo":
        if params.gamma < 0 or params.T_tilde < 0:
            raise ValueError("negative rate")
        amp = math.sqrt(2.0 * params.T_tilde * params.Omega**2 * params.gamma)
        return NoiseChannel(np.full(M, amp), "real")
    if params.kind == "kpo":
        if params.kappa < 0:
            raise ValueError("negative rate")
        amp = 0.0 if math.isinf(params.N) else math.sqrt(params.kappa / params.N)
        return NoiseChannel(np.full(M, amp), "complex")
    if params.kappa < 0:
        raise ValueError("negative rate")
    return NoiseChannel(np.full(M, math.sqrt(params.kappa)), "complex")


def check_normal_phase(params, flat_samples: np.ndarray) -> float:
    """Largest |b|^2/N seen in a DLM trajectory; warns beyond the validity limit."""
    if params.kind != "dlm":
        return 0.0
    M = params.M
    br = flat_samples[..., 2 * M : 3 * M]
    bi = flat_samples[..., 3 * M :]
    worst = float(np.max(br * br + bi * bi)) / params.N if br.size else 0.0
    if worst >= NORMAL_PHASE_LIMIT:
        warnings.warn(
            f"max |b|^2/N = {worst:.3g} exceeds {NORMAL_PHASE_LIMIT}; "
            "normal-phase expansion is unreliable",
            NormalPhaseWarning,
            stacklevel=2,
        )
    return worst
