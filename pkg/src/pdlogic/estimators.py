"""scikit-learn style wrappers around demodulation, basin labelling and gate tuning."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._parallel import parallel_map
from .analysis import UNDEFINED, classify_bit, DemodResult, demodulate_samples, readout
from .integrator import IntegrationConfig, NumericalError, integrate
from .models import SystemState, single_site
from .protocols import FULL, PSEUDO, INPUT_CONFIGS, Numerics, run_truth_table, site_calibration


class SubharmonicDemodulator(TransformerMixin, BaseEstimator):
    """Map sampled signals (rows) to the complex subharmonic amplitude (X, Y).

    Each row holds samples spaced ``sample_interval`` apart starting at
    ``t_start``; the amplitude is averaged over ``n_windows`` consecutive
    windows of length ``2*pi/omega_R``.
    """

    def __init__(self, omega_R=1.0, sample_interval=None, t_start=0.0, n_windows=1):
        self.omega_R = omega_R
        self.sample_interval = sample_interval
        self.t_start = t_start
        self.n_windows = n_windows

    def _per_window(self):
        n = 2 * math.pi / self.omega_R / self.sample_interval
        if abs(n - round(n)) > 1e-6 or round(n) < 32:
            raise ValueError("window must hold a whole number (>= 32) of samples")
        return int(round(n))

    def fit(self, X, y=None):
        if self.sample_interval is None or self.sample_interval <= 0:
            raise ValueError("sample_interval must be > 0")
        X = check_array(X)
        self.samples_per_window_ = self._per_window()
        need = self.n_windows * self.samples_per_window_ + 1
        if X.shape[1] < need:
            raise ValueError(f"rows need at least {need} samples")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "samples_per_window_")
        X = check_array(X)
        n = self.samples_per_window_
        amps = []
        for k in range(self.n_windows):
            seg = X[:, k * n : (k + 1) * n + 1].T
            amps.append(demodulate_samples(seg, self.omega_R, self.sample_interval,
                                           self.t_start + k * n * self.sample_interval))
        a = np.mean(amps, axis=0)
        return np.column_stack([a.real, a.imag])

    def predict_bits(self, X, r_min):
        Z = self.transform(X)
        return classify_bit(DemodResult(Z[:, 0] + 1j * Z[:, 1]), r_min)


class BasinClassifier(ClassifierMixin, BaseEstimator):
    """Predict the final bit of a single site from its initial state.

    ``X`` rows are flat single-site states ([theta, thetadot] for the
    pendulum). ``fit`` only calibrates the readout threshold; prediction
    integrates each row for ``t_final`` drive periods.
    """

    def __init__(self, params=None, t_final=150.0, steps_per_period=512, threads=None):
        self.params = params
        self.t_final = t_final
        self.steps_per_period = steps_per_period
        self.threads = threads

    def fit(self, X=None, y=None):
        if self.params is None:
            raise ValueError("params are required")
        p1 = single_site(self.params)
        cal = site_calibration(p1, numerics=Numerics(steps_per_period=self.steps_per_period))
        self.r_min_ = cal.r_min
        self.classes_ = np.array([UNDEFINED, 0, 1])
        self.n_features_in_ = p1.components_per_site
        return self

    def predict(self, X):
        check_is_fitted(self, "r_min_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns")
        p1 = single_site(self.params)
        cfg = IntegrationConfig.for_model(p1, self.t_final, self.steps_per_period)

        def one(row):
            try:
                traj = integrate(p1, None, SystemState.from_flat(p1.kind, row), cfg)
            except NumericalError:
                return UNDEFINED
            return int(classify_bit(readout(traj), self.r_min_)[0])

        return np.array(parallel_map(one, list(X), self.threads), dtype=int)


class PulseGate(BaseEstimator):
    """Choose a pulse duration that realizes a NAND/NOR gate at fixed coupling.

    ``fit`` scans ``Tq_grid`` (drive periods) in order and keeps the first
    duration whose noiseless truth table is Full (or Full/Pseudo when
    ``allow_pseudo``). ``predict`` maps input bit pairs to simulated outputs.
    """

    def __init__(self, params=None, kind="NAND", coupling=0.3, Tq_grid=None,
                 allow_pseudo=False, numerics=None):
        self.params = params
        self.kind = kind
        self.coupling = coupling
        self.Tq_grid = Tq_grid
        self.allow_pseudo = allow_pseudo
        self.numerics = numerics

    def fit(self, X=None, y=None):
        if self.params is None:
            raise ValueError("params are required")
        grid = np.arange(0.25, 10.01, 0.25) if self.Tq_grid is None else np.asarray(self.Tq_grid)
        ok = (FULL, PSEUDO) if self.allow_pseudo else (FULL,)
        num = self.numerics or Numerics()
        for Tq in grid:
            tt = run_truth_table(self.params, self.kind, self.coupling, float(Tq), num)
            if tt.classification in ok:
                self.Tq_ = tt.Tq_rounded
                self.truth_table_ = {c: tt.outcomes[c].output for c in INPUT_CONFIGS}
                self.classification_ = tt.classification
                self.n_features_in_ = 2
                return self
        raise ValueError("no pulse duration in Tq_grid realizes the gate")

    def predict(self, X):
        check_is_fitted(self, "truth_table_")
        X = check_array(X, dtype=int)
        if X.shape[1] != 2 or not np.isin(X, (0, 1)).all():
            raise ValueError("X must hold pairs of bits")
        return np.array([self.truth_table_[(int(a), int(b))] for a, b in X])
