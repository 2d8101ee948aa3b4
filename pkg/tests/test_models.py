import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdlogic.integrator import IntegrationConfig, Schedule, ScheduleSet, integrate
from pdlogic.models import (
    DlmParams,
    DpoParams,
    Edge,
    KpoParams,
    NormalPhaseWarning,
    SystemState,
    Topology,
    check_normal_phase,
    dlm_drift,
    dpo_drift,
    drift,
    kpo_drift,
    lambda_critical,
    noise_amplitudes,
)

from conftest import KPO_FIG3, dlm_fig3

finite = st.floats(-2.0, 2.0, allow_nan=False)


# ---------------------------------------------------------------- parameters


def test_topology_rejects_self_edges_and_duplicates():
    with pytest.raises(ValueError):
        Topology(2, (Edge(0, 0, 1.0),))
    with pytest.raises(ValueError):
        Topology(2, (Edge(0, 1, 1.0), Edge(1, 0, 1.0)))
    with pytest.raises(ValueError):
        Topology(2, (Edge(0, 2, 1.0),))


@pytest.mark.parametrize("bad", [dict(Omega=0.0), dict(gamma=-0.1), dict(T_tilde=-1.0),
                                 dict(M=0)])
def test_dpo_invariants(bad):
    kw = dict(Omega=1.0, A=0.5, Omega_d=2.0, gamma=0.2) | bad
    with pytest.raises(ValueError):
        DpoParams(**kw)


def test_kpo_invariants():
    with pytest.raises(ValueError):
        KpoParams(**(KPO_FIG3 | dict(kappa=-1.0)))
    with pytest.raises(ValueError):
        KpoParams(**KPO_FIG3, N=0.0)


def test_dlm_requires_normal_phase():
    with pytest.raises(ValueError):
        DlmParams(omega=1, omega0=1, lambda0=0.8, A1=0.5, omega_d=0.8, kappa=1.0)
    DlmParams(omega=1, omega0=1, lambda0=0.6, A1=0.5, omega_d=0.8, kappa=1.0)


def test_lambda_critical_forms():
    p = DlmParams(omega=2.0, omega0=0.5, lambda0=0.0, A1=0.5, omega_d=0.8, kappa=0.3)
    assert lambda_critical(p) == pytest.approx(0.5 * math.sqrt(0.5 / 2.0 * (0.3 + 4.0)))
    assert lambda_critical(p, "standard") == pytest.approx(0.5 * math.sqrt(0.25 * (0.09 + 4.0)))
    for k in (0.0, 1.0):
        q = DlmParams(omega=1.0, omega0=1.0, lambda0=0.0, A1=0.5, omega_d=0.8, kappa=k)
        assert lambda_critical(q) == pytest.approx(lambda_critical(q, "standard"))
    with pytest.raises(ValueError):
        lambda_critical(p, "other")


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=4))
def test_state_flat_roundtrip(pairs):
    for kind, vals in (("dpo", np.array(pairs)),
                       ("kpo", np.array([a + 1j * b for a, b in pairs])),
                       ("dlm", np.array([[a + 1j * b, b - 1j * a] for a, b in pairs]))):
        s = SystemState(kind, vals)
        back = SystemState.from_flat(kind, s.to_flat())
        np.testing.assert_array_equal(back.values, s.values)


def test_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        SystemState("dpo", [[np.nan, 0.0]])


# ---------------------------------------------------------------- drifts


def test_dpo_origin_is_fixed_point(dpo):
    p = DpoParams(**dict(Omega=1.0, A=0.5, Omega_d=2.0, gamma=0.2),
                  M=3, topology=Topology.chain(3, 0.4))
    for t in (0.0, 0.77, 3.0):
        d = dpo_drift(SystemState("dpo", np.zeros((3, 2))), t, p)
        assert np.all(d.values == 0.0)


def test_dpo_hand_evaluation_with_coupling():
    j, th0, v0, t = 0.3, 0.4, -0.2, 0.9
    p = DpoParams(Omega=1.3, A=0.5, Omega_d=2.0, gamma=0.2, M=2,
                  topology=Topology(2, (Edge(0, 1, j),)))
    d = dpo_drift(SystemState("dpo", [[th0, v0], [th0, v0]]), t, p)
    acc = -1.3**2 * (1 - 0.5 * math.cos(2.0 * t)) * math.sin(th0) - 0.2 * v0 + j * th0
    np.testing.assert_allclose(d.values[:, 0], v0)
    np.testing.assert_allclose(d.values[:, 1], acc, rtol=1e-14)


def test_dpo_schedule_controls_coupling_and_gate():
    p = DpoParams(Omega=1.0, A=0.5, Omega_d=2.0, gamma=0.0, M=2,
                  topology=Topology(2, (Edge(0, 1, 0.3),)))
    s = SystemState("dpo", [[0.2, 0.0], [0.5, 0.0]])
    sched = ScheduleSet(edges={(0, 1): Schedule.pulse(1.0, 1.0)}, sites={1: Schedule.constant(0.0)})
    off = dpo_drift(s, 0.5, p, sched).values[:, 1]
    on = dpo_drift(s, 1.5, p, sched).values[:, 1]
    drive = 0.5 * math.cos(1.0)
    np.testing.assert_allclose(off, [-(1 - drive) * math.sin(0.2), -math.sin(0.5)])
    drive = 0.5 * math.cos(3.0)
    np.testing.assert_allclose(on, [-(1 - drive) * math.sin(0.2) + 0.3 * 0.5,
                                    -math.sin(0.5) + 0.3 * 0.2])


def _kpo_oracle(a, t, Delta, chi, p0, A0, w, kappa, J):
    p = p0 * (1 + A0 * math.sin(w * t))
    nbr = np.zeros_like(a)
    nbr[1:] += a[:-1]
    nbr[:-1] += a[1:]
    return -1j * (-Delta * a - chi * np.conj(a) * a * a + p * np.conj(a) - J * nbr) - kappa * a


def test_kpo_vacuum_is_fixed_point(kpo):
    assert np.all(kpo_drift(SystemState("kpo", [0j]), 1.3, kpo).values == 0)


def test_kpo_hand_evaluation():
    kw = dict(Delta=0.7, chi=1.1, p0=2.5, A0=0.6, omega_mod=5.5, kappa=0.4, J=0.35)
    p = KpoParams(**kw, M=3)
    a = np.array([0.3 - 0.8j, -1.2 + 0.1j, 0.05 + 0.6j])
    got = kpo_drift(SystemState("kpo", a), 0.37, p).values
    want = _kpo_oracle(a, 0.37, kw["Delta"], kw["chi"], kw["p0"], kw["A0"], kw["omega_mod"],
                       kw["kappa"], kw["J"])
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-14)


def test_kpo_linear_decay_closed_form():
    Delta, kappa = 1.0, 0.4
    p = KpoParams(Delta=Delta, chi=0.0, p0=0.0, A0=0.0, omega_mod=5.5, kappa=kappa)
    Td = 2 * math.pi / 5.5
    periods = math.ceil(10 / kappa / Td)
    cfg = IntegrationConfig.for_model(p, periods)
    a0 = 0.8 - 0.3j
    traj = integrate(p, None, SystemState("kpo", [a0]), cfg)
    a = traj.samples[:, 0] + 1j * traj.samples[:, 1]
    exact = a0 * np.exp((1j * Delta - kappa) * traj.times)
    assert np.max(np.abs(a - exact)) < 1e-8


def _dlm_oracle(a, b, t, omega, omega0, lam0, A1, wd, kappa, J, N):
    lam = lam0 * (1 + A1 * math.sin(wd * t))
    nbr = np.zeros_like(a)
    nbr[1:] += a[:-1]
    nbr[:-1] += a[1:]
    rhs_a = (omega * a + lam * (b + np.conj(b)) * (1 - np.abs(b) ** 2 / (2 * N))
             - J * nbr - 1j * kappa * a)
    rhs_b = omega0 * b + lam * (a + np.conj(a)) * (1 - (2 * np.abs(b) ** 2 + b * b) / (2 * N))
    return -1j * rhs_a, -1j * rhs_b


def test_dlm_vacuum_is_fixed_point(dlm):
    assert np.all(dlm_drift(SystemState("dlm", [[0j, 0j]]), 2.0, dlm).values == 0)


def test_dlm_hand_evaluation_includes_b_squared_term():
    kw = dict(omega=1.0, omega0=1.2, lambda0=0.5, A1=0.5, omega_d=0.8, kappa=0.7, J=0.25, N=3.0)
    p = DlmParams(**kw, M=2)
    a = np.array([0.4 + 0.9j, -0.7 + 0.2j])
    b = np.array([1.1 - 0.6j, 0.3 + 1.4j])
    got = dlm_drift(SystemState("dlm", np.stack([a, b], 1)), 1.7, p).values
    wa, wb = _dlm_oracle(a, b, 1.7, kw["omega"], kw["omega0"], kw["lambda0"], kw["A1"],
                         kw["omega_d"], kw["kappa"], kw["J"], kw["N"])
    np.testing.assert_allclose(got[:, 0], wa, rtol=1e-13)
    np.testing.assert_allclose(got[:, 1], wb, rtol=1e-13)
    # the b^2 correction matters at this point: dropping it changes db/dt
    lam = 0.5 * (1 + 0.5 * math.sin(0.8 * 1.7))
    no_b2 = -1j * (1.2 * b + lam * 2 * a.real * (1 - 2 * np.abs(b) ** 2 / 6.0))
    assert np.max(np.abs(no_b2 - wb)) > 1e-2


def test_dlm_decoupled_rotation():
    p = DlmParams(omega=1.0, omega0=1.3, lambda0=0.0, A1=0.5, omega_d=0.8, kappa=0.0)
    a0, b0 = 0.5 + 0.2j, -0.1 + 0.4j
    cfg = IntegrationConfig.for_model(p, 5)
    traj = integrate(p, None, SystemState("dlm", [[a0, b0]]), cfg)
    s = traj.samples
    a = s[:, 0] + 1j * s[:, 1]
    b = s[:, 2] + 1j * s[:, 3]
    np.testing.assert_allclose(a, a0 * np.exp(-1j * traj.times), atol=1e-8)
    np.testing.assert_allclose(b, b0 * np.exp(-1.3j * traj.times), atol=1e-8)


@given(st.lists(finite, min_size=8, max_size=8), st.floats(0, 10))
def test_drifts_are_odd(vals, t):
    """Every model is symmetric under state negation (the bit-complement symmetry)."""
    v = np.array(vals)
    cases = [
        (DpoParams(Omega=1.0, A=0.5, Omega_d=2.0, gamma=0.2, M=2,
                   topology=Topology.chain(2, 0.3)), SystemState("dpo", v[:4].reshape(2, 2))),
        (KpoParams(**KPO_FIG3, J=0.5, M=2), SystemState("kpo", v[:2] + 1j * v[2:4])),
        (dlm_fig3(J=0.3, M=2, N=5.0),
         SystemState("dlm", np.stack([v[:2] + 1j * v[2:4], v[4:6] + 1j * v[6:]], 1))),
    ]
    for p, s in cases:
        np.testing.assert_allclose(drift(-s, t, p).values, -drift(s, t, p).values,
                                   rtol=1e-12, atol=1e-12)


def test_drift_rejects_wrong_variant(dpo, kpo):
    with pytest.raises(TypeError):
        dpo_drift(SystemState("kpo", [0.1j]), 0.0, dpo)
    with pytest.raises(TypeError):
        kpo_drift(SystemState("kpo", [0.1j]), 0.0, dpo)


# ---------------------------------------------------------------- energy


def test_pendulum_energy_conserved_per_period():
    p = DpoParams(Omega=1.0, A=0.0, Omega_d=2.0, gamma=0.0)
    cfg = IntegrationConfig.for_model(p, 20, steps_per_period=1024)
    traj = integrate(p, None, SystemState("dpo", [[1.2, 0.3]]), cfg)
    th, v = traj.samples[:, 0], traj.samples[:, 1]
    E = 0.5 * v**2 - np.cos(th)
    per_period = (1024 // cfg.sample_stride)
    drift_per_period = np.abs(np.diff(E[::per_period]))
    assert drift_per_period.max() < 1e-8


def test_undriven_kpo_hamiltonian_conserved():
    # closed KPO (no loss, no modulation) conserves
    # H = -Delta|a|^2 - chi/2 |a|^4 + p/2 (a^2 + a*^2)
    p = KpoParams(Delta=1.0, chi=1.0, p0=0.5, A0=0.0, omega_mod=5.5, kappa=0.0)
    cfg = IntegrationConfig.for_model(p, 30)
    traj = integrate(p, None, SystemState("kpo", [0.4 + 0.3j]), cfg)
    a = traj.samples[:, 0] + 1j * traj.samples[:, 1]
    H = -np.abs(a) ** 2 - 0.5 * np.abs(a) ** 4 + 0.25 * (a * a + np.conj(a) ** 2).real
    assert np.ptp(H) < 1e-9


# ---------------------------------------------------------------- noise


def test_noise_amplitudes():
    assert noise_amplitudes(DpoParams(Omega=1, A=0.5, Omega_d=2, gamma=0.2)).is_zero
    ch = noise_amplitudes(DpoParams(Omega=1.5, A=0.5, Omega_d=2, gamma=0.2, T_tilde=1e-3, M=3))
    np.testing.assert_allclose(ch.amplitude, math.sqrt(2 * 1e-3 * 1.5**2 * 0.2))
    assert ch.kind == "real"
    k = noise_amplitudes(KpoParams(**KPO_FIG3, N=1e3))
    np.testing.assert_allclose(k.amplitude, math.sqrt(0.4 / 1000))
    assert noise_amplitudes(KpoParams(**KPO_FIG3)).is_zero  # N = inf
    d = noise_amplitudes(dlm_fig3(kappa=0.7))
    np.testing.assert_allclose(d.amplitude, math.sqrt(0.7))
    assert d.kind == "complex"


def test_complex_noise_layout_touches_photon_only(dlm):
    target, site, comp, coef = noise_amplitudes(dlm).layout()
    # flat DLM layout is [Re a, Im a, Re b, Im b]; only the first two blocks get noise
    assert set(target) == {0, 1}
    np.testing.assert_allclose(np.abs(coef), math.sqrt(dlm.kappa / 2))


def test_normal_phase_warning(dlm):
    samples = np.zeros((3, 4))
    samples[1, 2] = math.sqrt(0.6 * dlm.N)
    with pytest.warns(NormalPhaseWarning):
        assert check_normal_phase(dlm, samples) == pytest.approx(0.6)
