from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from biphoton.model import (
    BiphotonState,
    GatePulse,
    angfreq_resolution,
    displacement_to_chirp,
    fourier_limited_temporal_moments,
    joint_uncertainty_product,
    jsa,
    make_state,
    spectral_moments,
    spectrogram_moments,
    temporal_covariance,
    temporal_moments,
    time_bandwidth_products,
    wavelength_to_angfreq,
)

sigmas = st.floats(0.5, 20.0)
rhos = st.floats(-0.995, 0.995)
chirps = st.floats(-0.05, 0.05)


@st.composite
def states(draw, chirped=True):
    a_s = draw(chirps) if chirped else 0.0
    a_i = draw(chirps) if chirped else 0.0
    return make_state(draw(sigmas), draw(sigmas), draw(rhos), draw(st.floats(-100, 100)),
                      draw(st.floats(-100, 100)), a_s, a_i)


def _moments_summary(cov):
    vs, vi, c = cov[0, 0], cov[1, 1], cov[0, 1]
    return {
        "marginal_s": math.sqrt(vs),
        "marginal_i": math.sqrt(vi),
        "heralded_s": math.sqrt(vs - c * c / vi),
        "heralded_i": math.sqrt(vi - c * c / vs),
        "rho": c / math.sqrt(vs * vi),
        "width_sum": math.sqrt(vs + vi + 2 * c),
        "width_diff": math.sqrt(vs + vi - 2 * c),
    }


def _grid_cov(x, y, p):
    p = p / p.sum()
    mx = (x * p).sum()
    my = (y * p).sum()
    vx = ((x - mx) ** 2 * p).sum()
    vy = ((y - my) ** 2 * p).sum()
    c = ((x - mx) * (y - my) * p).sum()
    return np.array([[vx, c], [c, vy]])


class TestState:
    def test_table1_state_is_valid(self, table1_state):
        assert table1_state.sigma_s == 10.56
        assert table1_state.purity == pytest.approx(math.sqrt(1 - 0.9951**2))

    def test_separable_state(self):
        s = make_state(1, 1, 0, 0, 0, 0, 0)
        assert s.purity == 1.0

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_unnormalizable_correlation_rejected(self, rho):
        with pytest.raises(ValueError, match="rho_w"):
            make_state(1, 1, rho)

    @pytest.mark.parametrize("bad", [(0, 1), (1, -2)])
    def test_nonpositive_bandwidth_rejected(self, bad):
        with pytest.raises(ValueError, match="positive"):
            make_state(*bad, 0.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            make_state(1, 1, 0, chirp_s=math.nan)

    def test_gate_relation(self):
        g = GatePulse(0.120)
        assert g.sigma_g * g.tau_g == 0.5
        with pytest.raises(ValueError):
            GatePulse(0.0)


class TestJSA:
    def test_peak_at_centre_with_zero_phase(self, table1_state):
        s = table1_state.with_chirps(0.0373, -0.0359)
        peak = jsa(s, s.omega0_s, s.omega0_i)
        assert peak.imag == 0.0
        w = np.linspace(-3, 3, 41)
        assert np.all(np.abs(jsa(s, s.omega0_s + w, s.omega0_i - w)) <= abs(peak))

    @given(states())
    def test_modulus_independent_of_chirp(self, s):
        w = np.linspace(-2, 2, 9)
        a = jsa(s, s.omega0_s + w * s.sigma_s, s.omega0_i + w[::-1] * s.sigma_i)
        b = jsa(s.with_chirps(), s.omega0_s + w * s.sigma_s, s.omega0_i + w[::-1] * s.sigma_i)
        np.testing.assert_allclose(np.abs(a), np.abs(b), rtol=1e-13)

    @given(states())
    def test_normalization_on_quadrature_grid(self, s):
        # Trapezoid rule over +-6 sigma; a Gaussian integrand converges spectrally.
        h = math.sqrt(1 - s.rho_w**2)
        n = int(min(4001, max(401, 60 / h)))
        ws = s.omega0_s + np.linspace(-6, 6, n) * s.sigma_s
        wi = s.omega0_i + np.linspace(-6, 6, n) * s.sigma_i
        p = np.abs(jsa(s, ws[:, None], wi[None, :])) ** 2
        total = integrate.trapezoid(integrate.trapezoid(p, wi, axis=1), ws)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_normalization_adaptive_quadrature(self):
        s = make_state(2.0, 3.0, -0.6, 5.0, -4.0, 0.02, -0.01)
        val, err = integrate.dblquad(
            lambda y, x: abs(jsa(s, x, y)) ** 2, -10, 20, -26, 14, epsabs=1e-11, epsrel=1e-11
        )
        assert val == pytest.approx(1.0, abs=1e-6)


class TestSpectralMoments:
    def test_table1_values(self, table1_state):
        m = spectral_moments(table1_state)
        assert m.width_sum == pytest.approx(1.327, abs=5e-4)
        assert m.heralded_s == pytest.approx(1.044, abs=5e-4)
        assert m.rho == -0.9951

    def test_separable(self):
        m = spectral_moments(make_state(3, 5, 0))
        assert m.heralded_s == m.marginal_s and m.heralded_i == m.marginal_i
        assert m.width_sum == m.width_diff

    @given(states())
    def test_chirp_invariance_and_parallelogram(self, s):
        a = spectral_moments(s)
        assert a == spectral_moments(s.with_chirps(0.03, -0.02))
        lhs = a.width_sum**2 + a.width_diff**2
        assert lhs == pytest.approx(2 * (a.marginal_s**2 + a.marginal_i**2), rel=1e-12)
        assert all(getattr(a, k) > 0 for k in ("marginal_s", "marginal_i", "heralded_s", "heralded_i"))

    @pytest.mark.parametrize("s", [make_state(10.56, 9.69, -0.9951), make_state(2.0, 7.0, 0.7), make_state(1, 1, 0)])
    def test_against_grid_moments(self, s):
        h = math.sqrt(1 - s.rho_w**2)
        n = int(max(401, 80 / h))
        x = np.linspace(-8, 8, n) * s.sigma_s
        y = np.linspace(-8, 8, n) * s.sigma_i
        p = np.abs(jsa(s, x[:, None], y[None, :])) ** 2
        X, Y = np.meshgrid(x, y, indexing="ij")
        got = _moments_summary(_grid_cov(X, Y, p))
        m = spectral_moments(s)
        for k, v in got.items():
            assert getattr(m, k) == pytest.approx(v, rel=1e-8), k


class TestTemporalMoments:
    def test_table1_values(self, table1_state):
        t = temporal_moments(table1_state)
        assert t.width_diff == pytest.approx(0.0656, abs=5e-5)
        assert t.marginal_s == pytest.approx(0.479, abs=5e-4)
        assert t.heralded_s == pytest.approx(0.0473, abs=5e-5)
        assert t.rho == pytest.approx(0.9951)

    def test_dispersed_difference_width(self, table1_state):
        t = temporal_moments(table1_state.with_chirps(0.0373, -0.0359))
        assert t.width_diff == pytest.approx(0.135, abs=5e-4)

    @given(states(chirped=False))
    def test_reduces_to_fourier_limit(self, s):
        a = temporal_moments(s)
        b = fourier_limited_temporal_moments(s)
        for k in ("marginal_s", "marginal_i", "heralded_s", "heralded_i", "rho", "width_sum", "width_diff"):
            assert getattr(a, k) == pytest.approx(getattr(b, k), rel=1e-12, abs=1e-15), k

    @given(states())
    def test_closed_forms_match_covariance(self, s):
        # Independent route: second moments of the group-delay-shifted
        # transform-limited pulse, C^-1/4 + D C D.
        ss, si, r = s.sigma_s, s.sigma_i, s.rho_w
        c = np.array([[ss * ss, r * ss * si], [r * ss * si, si * si]])
        d = np.diag([2 * s.chirp_s, 2 * s.chirp_i])
        cov = np.linalg.inv(c) / 4 + d @ c @ d
        np.testing.assert_allclose(temporal_covariance(s), cov, rtol=1e-10, atol=1e-14)
        want = _moments_summary(cov)
        t = temporal_moments(s)
        for k, v in want.items():
            assert getattr(t, k) == pytest.approx(v, rel=1e-9), k

    def test_dispersed_difference_minimum(self):
        # Minimizing over A_i lands at A_s rho sigma_s / sigma_i, which tends to
        # -A_s sigma_s / sigma_i as rho -> -1; there only the cross term remains.
        from scipy.optimize import minimize_scalar

        a_s = 0.0373
        for rho in (-0.9, -0.99, -0.9951, -0.9999):
            s = make_state(10.56, 9.69, rho)
            res = minimize_scalar(lambda a: temporal_moments(s.with_chirps(a_s, a)).width_diff,
                                  bracket=(-0.1, 0.0), tol=1e-12)
            assert res.x == pytest.approx(a_s * rho * s.sigma_s / s.sigma_i, rel=1e-5)
            guess = -a_s * s.sigma_s / s.sigma_i
            assert abs(res.x - guess) <= abs(guess) * (1 + rho) * 1.0001
            excess = temporal_moments(s.with_chirps(a_s, guess)).width_diff ** 2 - temporal_moments(s).width_diff ** 2
            assert excess == pytest.approx(8 * a_s * a_s * (1 + rho) * s.sigma_s**2, rel=1e-9)


class TestProducts:
    def test_uncertainty_product_examples(self):
        assert joint_uncertainty_product(make_state(4, 4, 0)) == pytest.approx(1.0, rel=1e-14)
        r = -0.9951
        want = math.sqrt((1 + r) / (1 - r))
        assert joint_uncertainty_product(make_state(4, 4, r)) == pytest.approx(want, rel=1e-12)
        assert want == pytest.approx(0.0496, abs=5e-5)

    @given(states(chirped=False), st.floats(1e-4, 0.05), st.sampled_from([-1, 1]), chirps, st.booleans())
    def test_chirp_increases_product(self, s, size, sign, other, swap):
        # One chirp resolvably away from zero; the other anywhere.
        a_s, a_i = (other, sign * size) if swap else (sign * size, other)
        assert joint_uncertainty_product(s.with_chirps(a_s, a_i)) > joint_uncertainty_product(s)

    @given(states(chirped=False))
    def test_tbp_identities(self, s):
        t = time_bandwidth_products(s)
        h = math.sqrt(1 - s.rho_w**2)
        assert t["marginal_heralded"] == pytest.approx(0.5, abs=1e-12)
        assert t["heralded_marginal"] == pytest.approx(0.5, abs=1e-12)
        assert t["marginal"] == pytest.approx(1 / (2 * h), rel=1e-12)
        assert t["heralded"] == pytest.approx(h / 2, rel=1e-12)
        assert math.prod(t.values()) == pytest.approx(1 / 16, rel=1e-12)

    def test_tbp_examples(self):
        t = time_bandwidth_products(make_state(10.56, 9.69, -0.9951))
        assert t["heralded"] == pytest.approx(0.0494, abs=5e-5)
        assert t["marginal"] == pytest.approx(5.06, abs=5e-3)
        t0 = time_bandwidth_products(make_state(10.56, 9.69, 0.0))
        assert all(v == pytest.approx(0.5, abs=1e-15) for v in t0.values())

    @given(states(chirped=False), chirps, chirps)
    def test_chirp_never_lowers_tbps(self, s, a_s, a_i):
        base = time_bandwidth_products(s)
        chirped = time_bandwidth_products(s.with_chirps(a_s, a_i))
        for k in base:
            assert chirped[k] >= base[k] * (1 - 1e-12)


def _brute_force_spectrogram(state, gate, gated_side):
    """Moments of gate-delay x partner-frequency coincidences from the JSA alone."""
    if gated_side == "idler":
        state = make_state(state.sigma_i, state.sigma_s, state.rho_w, state.omega0_i, state.omega0_s,
                           state.chirp_i, state.chirp_s)
    n_w, n_o = 4096, 301
    dw = 16 * state.sigma_s / n_w
    w = (np.arange(n_w) - n_w // 2) * dw
    o = np.linspace(-6, 6, n_o) * state.sigma_i
    amp = jsa(state, state.omega0_s + w[:, None], state.omega0_i + o[None, :])
    # t-domain amplitude of the gated photon for each partner frequency
    f = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(amp, axes=0), axis=0), axes=0)
    t = (np.arange(n_w) - n_w // 2) * (2 * math.pi / (n_w * dw))
    inten = np.abs(f) ** 2
    dt = t[1] - t[0]
    kt = np.arange(-int(8 * gate.tau_g / dt), int(8 * gate.tau_g / dt) + 1) * dt
    kernel = np.exp(-0.5 * (kt / gate.tau_g) ** 2)
    gated = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="same"), 0, inten)
    T, O = np.meshgrid(t, o, indexing="ij")
    cov = _grid_cov(T, O, gated)
    return math.sqrt(cov[1, 1]), math.sqrt(cov[0, 0]), cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1])


class TestSpectrogram:
    def test_unchirped_is_uncorrelated(self, table1_state):
        bw, pulse, rho_f = spectrogram_moments(table1_state, GatePulse(0.120))
        assert rho_f == 0.0
        assert bw == table1_state.sigma_i
        assert pulse == pytest.approx(math.hypot(0.120, 0.479), abs=5e-4)
        assert pulse == pytest.approx(0.494, abs=5e-4)

    def test_sign_convention(self, table1_state):
        _, _, rho_f = spectrogram_moments(table1_state.with_chirps(0.0373, 0.0), GatePulse(0.120), "signal")
        assert rho_f > 0

    def test_instantaneous_gate_limit(self, table1_state):
        s = table1_state.with_chirps(0.0373, -0.0359)
        _, pulse, _ = spectrogram_moments(s, GatePulse(1e-7), "signal")
        assert pulse == pytest.approx(temporal_moments(s).marginal_s, rel=1e-9)
        _, pulse_i, _ = spectrogram_moments(s, GatePulse(1e-7), "idler")
        assert pulse_i == pytest.approx(temporal_moments(s).marginal_i, rel=1e-9)

    @pytest.mark.parametrize("side", ["signal", "idler"])
    @pytest.mark.parametrize("chirp", [(0.0373, -0.0359), (0.0, 0.02), (-0.01, 0.0)])
    def test_against_brute_force(self, side, chirp):
        s = make_state(10.56, 9.69, -0.9951, 0, 0, *chirp)
        gate = GatePulse(0.120)
        want = _brute_force_spectrogram(s, gate, side)
        got = spectrogram_moments(s, gate, side)
        assert got[0] == pytest.approx(want[0], rel=1e-5)
        assert got[1] == pytest.approx(want[1], rel=1e-5)
        assert got[2] == pytest.approx(want[2], abs=1e-5)

    def test_side_aliases(self, table1_state):
        g = GatePulse(0.1)
        assert spectrogram_moments(table1_state, g, "s") == spectrogram_moments(table1_state, g, "signal")
        with pytest.raises(ValueError):
            spectrogram_moments(table1_state, g, "pump")


class TestConversions:
    def test_examples(self):
        assert wavelength_to_angfreq(775.0) == pytest.approx(2430.5, abs=0.05)
        assert angfreq_resolution(728.6, 0.081) == pytest.approx(0.287, abs=5e-4)
        assert displacement_to_chirp(28.4, "signal") == pytest.approx(0.0373, abs=5e-5)
        assert displacement_to_chirp(1.0, "idler") == pytest.approx(1.925e-3)

    @pytest.mark.parametrize("lam", [0.0, -5.0])
    def test_nonpositive_wavelength(self, lam):
        with pytest.raises(ValueError):
            wavelength_to_angfreq(lam)
        with pytest.raises(ValueError):
            angfreq_resolution(lam, 0.1)

    def test_unknown_side(self):
        with pytest.raises(ValueError):
            displacement_to_chirp(1.0, "pump")


def test_state_is_hashable_and_frozen(table1_state):
    assert isinstance(hash(table1_state), int)
    with pytest.raises(Exception):
        table1_state.sigma_s = 1.0
    assert isinstance(table1_state, BiphotonState)
