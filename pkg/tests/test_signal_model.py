import math

import numpy as np
import pytest
from scipy.integrate import quad

from mle_threshold_lab.errors import (
    CurvatureError,
    DegenerateSignalError,
    GridSizeError,
)
from mle_threshold_lab.signal_model import (
    AcrModel,
    PulseSpec,
    acr_from_lag_functions,
    build_acr,
    build_pulse,
    curvatures,
    envelope_and_mean_frequency,
    flat_spectrum_acr,
    local_maxima,
    mean_frequency_from_spectrum,
    noise_deriv_stats,
)

NS = 1e-9
GHZ = 1e9


def gaussian_acr_oracle(tw, fc, theta):
    """Normalized ACR of the ideal pulse by adaptive quadrature (independent
    of the sampled-correlation implementation).

    Integration runs in pulse-width units so quad's tolerances act on an
    O(1) problem.
    """
    k = fc * tw
    phi = theta / tw

    def su(u):
        return math.exp(-2.0 * math.pi * u * u) * math.cos(2.0 * math.pi * k * u)

    lim = 2.2
    num, _ = quad(lambda u: su(u + phi) * su(u), -lim - abs(phi), lim,
                  limit=2000, epsabs=1e-12, epsrel=1e-11,
                  points=[-phi / 2.0, -phi, 0.0])
    den, _ = quad(lambda u: su(u) * su(u), -lim, lim,
                  limit=2000, epsabs=1e-12, epsrel=1e-11, points=[0.0])
    return num / den


@pytest.fixture(scope="module")
def baseband_06():
    return build_acr(build_pulse(PulseSpec(tw=0.6 * NS, fc=0.0)),
                     window=(-0.9 * NS, 0.9 * NS))


@pytest.fixture(scope="module")
def passband_2_685():
    return build_acr(build_pulse(PulseSpec(tw=2 * NS, fc=6.85 * GHZ)),
                     window=(-4 * NS, 3 * NS))


class TestBuildPulse:
    def test_energy_normalized(self):
        for tw, fc in [(0.6 * NS, 0.0), (2 * NS, 6.85 * GHZ), (0.6 * NS, 8 * GHZ)]:
            p = build_pulse(PulseSpec(tw=tw, fc=fc, es=1.0))
            assert abs(p.es - 1.0) <= 1e-6

    def test_zero_crossings_match_cosine(self):
        p = build_pulse(PulseSpec(tw=2 * NS, fc=6.85 * GHZ))
        got = int(np.count_nonzero(np.diff(np.sign(p.s)) != 0))
        # oracle: sign changes of the analytic pulse on a 10x finer grid
        t_ref = np.arange(p.t[0], p.t[-1], p.dt / 10.0)
        s_ref = np.exp(-2 * np.pi * t_ref ** 2 / (2 * NS) ** 2) * np.cos(
            2 * np.pi * 6.85 * GHZ * t_ref)
        want = int(np.count_nonzero(np.diff(np.sign(s_ref)) != 0))
        assert got == want

    def test_peak_at_zero(self):
        p = build_pulse(PulseSpec(tw=0.6 * NS, fc=8 * GHZ))
        assert p.t[np.argmax(p.s)] == 0.0
        assert abs(p.es - 1.0) <= 1e-6

    def test_grid_budget(self):
        with pytest.raises(GridSizeError):
            build_pulse(PulseSpec(tw=0.6 * NS, fc=8 * GHZ), max_samples=64)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            PulseSpec(tw=-1.0)
        with pytest.raises(ValueError):
            PulseSpec(tw=1.0, oversample=4)


class TestBuildAcr:
    def test_matches_quadrature_oracle(self):
        model = build_acr(build_pulse(PulseSpec(tw=0.6 * NS, fc=0.0)))
        rng = np.random.default_rng(11)
        thetas = rng.uniform(-1.5 * NS, 1.5 * NS, size=100)
        want = np.array([gaussian_acr_oracle(0.6 * NS, 0.0, th) for th in thetas])
        got = model.r(thetas)
        assert np.max(np.abs(got - want)) <= 1e-6

    def test_matches_quadrature_oracle_passband(self):
        model = build_acr(build_pulse(PulseSpec(tw=0.6 * NS, fc=4 * GHZ)))
        rng = np.random.default_rng(12)
        thetas = rng.uniform(-1.2 * NS, 1.2 * NS, size=20)
        want = np.array([gaussian_acr_oracle(0.6 * NS, 4 * GHZ, th) for th in thetas])
        got = model.r(thetas)
        assert np.max(np.abs(got - want)) <= 1e-6

    def test_r0_is_one(self, baseband_06, passband_2_685):
        assert baseband_06.r(0.0) == pytest.approx(1.0, abs=1e-12)
        assert passband_2_685.r(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry_and_bound(self, passband_2_685):
        tau = np.linspace(0, 3 * NS, 10_000)
        r_pos = passband_2_685.r(tau)
        r_neg = passband_2_685.r(-tau)
        assert np.max(np.abs(r_pos - r_neg)) <= 1e-9
        assert np.max(np.abs(r_pos)) <= 1.0 + 1e-9

    def test_local_maxima_against_fine_grid_oracle(self):
        tw, fc = 0.6 * NS, 4 * GHZ
        model = build_acr(build_pulse(PulseSpec(tw=tw, fc=fc)),
                          window=(-0.9 * NS, 0.9 * NS))
        maxima, _ = local_maxima(model, (-0.9 * NS, 0.9 * NS))
        # oracle: extrema of the closed-form ACR on a very fine grid
        tau = np.linspace(-0.9 * NS, 0.9 * NS, 2_000_001)
        r_ref = np.exp(-np.pi * tau ** 2 / tw ** 2) * np.cos(2 * np.pi * fc * tau)
        interior = (np.diff(np.sign(np.diff(r_ref))) < 0).nonzero()[0] + 1
        want = tau[interior]
        assert len(maxima) == len(want)
        assert np.max(np.abs(np.sort(maxima) - want)) <= 0.5e-12
        # adjacent spacing tracks the carrier period; the Gaussian envelope
        # pulls the outer maxima inward by a little over 2%
        gaps = np.diff(np.sort(maxima))
        assert np.all(np.abs(gaps - 0.25 * NS) <= 0.03 * 0.25 * NS)

    def test_spectral_derivative_vs_finite_difference(self, passband_2_685):
        m = passband_2_685
        tau = np.linspace(-3 * NS, 3 * NS, 2001)
        h = 2e-12 / 4
        fd = (m.r(tau - 2 * h) - 8 * m.r(tau - h) + 8 * m.r(tau + h)
              - m.r(tau + 2 * h)) / (12 * h)
        got = m.rdot(tau)
        assert np.max(np.abs(got - fd)) <= 1e-4 * np.max(np.abs(got))


class TestEnvelopeAndMeanFrequency:
    def test_mean_frequency_narrowband(self, passband_2_685):
        assert passband_2_685.fc_mean == pytest.approx(6.85 * GHZ, rel=0.01)

    def test_envelope_at_zero(self, passband_2_685):
        assert passband_2_685.env(0.0) == pytest.approx(1.0, abs=1e-3)

    def test_envelope_dominates_acr(self, baseband_06, passband_2_685):
        # exact on window-grid nodes; off-grid evaluation degrades within an
        # interpolator half-width of the window edge, so probe the interior
        for model, lim in [(baseband_06, 0.88 * NS), (passband_2_685, 2.9 * NS)]:
            tau = np.linspace(-lim, lim, 4001)
            assert np.all(model.env(tau) >= np.abs(model.r(tau)) - 1e-6)

    def test_recompute_other_window(self, passband_2_685):
        env, fc = envelope_and_mean_frequency(passband_2_685, (-2 * NS, 2 * NS))
        assert fc == pytest.approx(6.85 * GHZ, rel=0.01)
        assert env(0.0) == pytest.approx(1.0, abs=1e-3)

    def test_degenerate_spectrum_raises(self):
        freqs = np.fft.fftfreq(64, d=1e-12)
        with pytest.raises(DegenerateSignalError):
            mean_frequency_from_spectrum(freqs, np.zeros(64))


class TestCurvatures:
    @pytest.mark.parametrize("tw,fc,window", [
        (0.6 * NS, 0.0, (-0.9 * NS, 0.9 * NS)),
        (0.6 * NS, 4 * GHZ, (-0.9 * NS, 0.9 * NS)),
        (0.6 * NS, 8 * GHZ, (-0.9 * NS, 0.9 * NS)),
        (2 * NS, 0.0, (-4 * NS, 3 * NS)),
        (2 * NS, 6.85 * GHZ, (-4 * NS, 3 * NS)),
    ])
    def test_identity(self, tw, fc, window):
        model = build_acr(build_pulse(PulseSpec(tw=tw, fc=fc)), window=window)
        bs2, be2 = curvatures(model)
        resid = abs(bs2 - be2 - 4 * math.pi ** 2 * model.fc_mean ** 2) / bs2
        assert resid <= 0.01

    def test_beta_s2_analytic(self):
        # -r''(0) = 2 pi / tw^2 + 4 pi^2 fc^2 (up to the e^{-pi fc^2 tw^2} term)
        model = build_acr(build_pulse(PulseSpec(tw=0.6 * NS, fc=8 * GHZ)))
        want = 2 * math.pi / (0.6 * NS) ** 2 + 4 * math.pi ** 2 * (8 * GHZ) ** 2
        assert model.beta_s2 == pytest.approx(want, rel=1e-4)

    def test_flat_spectrum_reference(self):
        b = 7.5 * GHZ
        model = flat_spectrum_acr(fc=6.85 * GHZ, bandwidth=b, window=(-4 * NS, 4 * NS))
        assert model.beta_e2 == pytest.approx(math.pi ** 2 * b ** 2 / 3.0, rel=0.01)
        assert model.beta_s2 / model.beta_e2 == pytest.approx(11.0, abs=0.3)

    def test_baseband_ratio_frozen_oracle(self, baseband_06):
        # For a baseband Gaussian ACR the mean frequency is 1/(pi tw), so
        # beta_s2/beta_e2 = 2 pi/(2 pi - 4); frozen from the definitions.
        bs2, be2 = curvatures(baseband_06)
        assert baseband_06.fc_mean == pytest.approx(1.0 / (math.pi * 0.6 * NS), rel=0.02)
        assert bs2 / be2 == pytest.approx(2 * math.pi / (2 * math.pi - 4), rel=0.02)

    def test_positive_curvature_rejected(self):
        with pytest.raises(CurvatureError):
            acr_from_lag_functions(
                lambda t: 1.0 + (t / NS) ** 2,
                lambda t: 2.0 * t / NS ** 2,
                lambda t: np.full_like(np.asarray(t, dtype=float), 2.0 / NS ** 2),
                window=(-1 * NS, 1 * NS), carrier_hint=1 * GHZ,
            )


class TestNoiseDerivStats:
    @pytest.mark.parametrize("tw,fc", [
        (0.6 * NS, 0.0), (0.6 * NS, 4 * GHZ), (0.6 * NS, 8 * GHZ),
        (2 * NS, 0.0), (2 * NS, 6.85 * GHZ),
    ])
    def test_nu0_vanishes(self, tw, fc):
        stats = noise_deriv_stats(build_pulse(PulseSpec(tw=tw, fc=fc)))
        assert abs(stats.nu0) <= 1e-6

    def test_first_derivative_energy_equals_curvature(self):
        pulse = build_pulse(PulseSpec(tw=0.6 * NS, fc=0.0))
        stats = noise_deriv_stats(pulse)
        model = build_acr(pulse)
        assert stats.e_sdot / stats.e_s == pytest.approx(model.beta_s2, rel=1e-4)

    def test_delta4_matches_acr_fourth_derivative(self):
        pulse = build_pulse(PulseSpec(tw=0.6 * NS, fc=0.0))
        stats = noise_deriv_stats(pulse)
        model = build_acr(pulse)
        # O(h^4) seven-point stencil for the fourth derivative of r at 0
        h = 0.6 * NS / 30.0
        r = model.r(h * np.arange(-3, 4))
        coef = np.array([-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0])
        fourth = float(coef @ r) / (6.0 * h ** 4)
        assert stats.delta4 == pytest.approx(fourth, rel=1e-3)

    def test_positive_energies(self):
        stats = noise_deriv_stats(build_pulse(PulseSpec(tw=2 * NS, fc=6.85 * GHZ)))
        assert stats.e_sdot > 0 and stats.e_sddot > 0
        assert abs(stats.nu0) <= 1.0
