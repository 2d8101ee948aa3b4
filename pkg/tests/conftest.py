import warnings

import pytest
from hypothesis import HealthCheck, settings

from pdlogic.models import DlmParams, DpoParams, KpoParams, NormalPhaseWarning, lambda_critical

settings.register_profile(
    "pdlogic", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("pdlogic")

# Flip/gate reference point of the pendulum network.
DPO_FIG1 = dict(Omega=1.0, A=0.5, Omega_d=2.0, gamma=0.2)
# Pseudo-gate / reset reference point.
DPO_LOW_DAMPING = dict(Omega=1.0, A=0.5, Omega_d=2.0, gamma=0.1)
KPO_FIG3 = dict(Delta=1.0, chi=1.0, p0=2.5, A0=0.6, omega_mod=5.5, kappa=0.4)


def dlm_fig3(**kw):
    base = dict(omega=1.0, omega0=1.0, A1=0.5, omega_d=0.8, kappa=1.0, N=1000.0)
    base.update(kw)
    lc = lambda_critical(DlmParams(lambda0=0.0, **base))
    return DlmParams(lambda0=0.9 * lc, **base)


@pytest.fixture
def dpo():
    return DpoParams(**DPO_FIG1)


@pytest.fixture
def dpo_low():
    return DpoParams(**DPO_LOW_DAMPING)


@pytest.fixture
def kpo():
    return KpoParams(**KPO_FIG3)


@pytest.fixture
def dlm():
    return dlm_fig3()


@pytest.fixture(autouse=True)
def _quiet_normal_phase():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NormalPhaseWarning)
        yield


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
