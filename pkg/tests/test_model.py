import math

import numpy as np
import pytest

from spharma import model as md
from spharma import spectral
from spharma.model import SpharmaModel
from spharma.sphere import build_grid, real_sph_harm

FOUR_PI = 4.0 * math.pi


def series_division_oracle(phi, theta, count):
    """Coefficients of theta(z)/phi(z) via the geometric operator series.

    1/phi(z) = sum_k g(z)^k with g(z) = phi_1 z + ... + phi_p z^p; powers of
    g accumulate by convolution, independent of the production recursion.
    """
    g = np.r_[0.0, phi]
    inv = np.zeros(count + 1)
    inv[0] = 1.0
    power = np.array([1.0])
    for _ in range(count):
        power = np.convolve(power, g)[: count + 1]
        if not power.any():
            break
        inv[: len(power)] += power
    num = np.r_[1.0, theta]
    return np.convolve(inv, num)[: count + 1]


class TestValidation:
    def test_noise_must_be_positive(self):
        with pytest.raises(ValueError):
            SpharmaModel.uniform(1, noise=0.0)

    def test_orders(self):
        m = SpharmaModel(1, [np.array([0.1, 0.2]), np.array([0.3])],
                         [np.empty(0), np.array([0.5])], np.ones(2))
        assert m.p == 2 and m.q == 1

    def test_json_roundtrip(self, tmp_path):
        m = SpharmaModel(1, [np.array([0.1]), np.array([0.2, 0.1])],
                         [np.array([0.4]), np.empty(0)], np.array([1.0, 2.0]))
        path = tmp_path / "model.json"
        m.save(path)
        back = SpharmaModel.load(path)
        assert back.band_limit == 1
        assert np.array_equal(back.ar[1], m.ar[1])
        assert np.array_equal(back.ma[0], m.ma[0])
        assert np.array_equal(back.noise, m.noise)

    def test_load_rejects_nonpositive_noise(self, tmp_path):
        payload = {"schema": 1, "band_limit": 0,
                   "entries": [{"l": 0, "ar": [], "ma": [], "noise": -1.0}]}
        with pytest.raises(ValueError):
            SpharmaModel.from_json(payload)


class TestCausality:
    def test_ar1_root(self):
        rep = md.check_causal(SpharmaModel.uniform(3, ar=[0.5], noise=1.0))
        assert rep.causal and abs(rep.min_root_modulus - 2.0) < 1e-12

    def test_unit_root_flagged(self):
        ar = [np.array([0.5])] * 3
        ar[1] = np.array([1.0])
        m = SpharmaModel(2, ar, [np.empty(0)] * 3, np.ones(3))
        rep = md.check_causal(m)
        assert not rep.causal and rep.offending_multipoles == [1]

    def test_quadratic_roots(self):
        # phi(z) = 1 - 0.2 z - 0.8 z^2 has roots 1 and -1.25
        rep = md.check_causal(SpharmaModel.uniform(0, ar=[0.2, 0.8], noise=1.0))
        assert not rep.causal
        assert abs(rep.min_root_modulus - 1.0) < 1e-12

    def test_scale_free_in_noise(self):
        base = SpharmaModel.uniform(2, ar=[0.3, 0.1], noise=1.0)
        scaled = SpharmaModel.uniform(2, ar=[0.3, 0.1], noise=123.4)
        r1, r2 = md.check_causal(base), md.check_causal(scaled)
        assert r1.causal == r2.causal
        assert r1.min_root_modulus == r2.min_root_modulus

    def test_invertibility(self):
        rep = md.check_invertible(SpharmaModel.uniform(1, ma=[0.5], noise=1.0))
        assert rep.causal and abs(rep.min_root_modulus - 2.0) < 1e-12
        rep = md.check_invertible(SpharmaModel.uniform(1, ma=[1.0], noise=1.0))
        assert not rep.causal
        rep = md.check_invertible(SpharmaModel.uniform(1, ar=[0.5], noise=1.0))
        assert rep.causal and math.isinf(rep.min_root_modulus)

    def test_coprimality(self):
        ok = SpharmaModel.uniform(1, ar=[0.5], ma=[0.5], noise=1.0)
        assert md.check_coprime(ok).all()
        shared = SpharmaModel.uniform(1, ar=[0.5], ma=[-0.5], noise=1.0)
        assert not md.check_coprime(shared).any()
        trivial = SpharmaModel.white_noise(np.ones(2))
        assert md.check_coprime(trivial).all()


class TestPsi:
    def test_white_noise(self):
        m = SpharmaModel.white_noise(np.ones(1))
        assert np.array_equal(md.psi_coefficients(m, 0, 4), [1, 0, 0, 0, 0])

    def test_ar1_geometric(self):
        m = SpharmaModel.uniform(0, ar=[0.5], noise=1.0)
        psi = md.psi_coefficients(m, 0, 8)
        assert np.abs(psi - 0.5 ** np.arange(9)).max() < 1e-14

    def test_arma11(self):
        m = SpharmaModel.uniform(0, ar=[0.5], ma=[0.4], noise=1.0)
        psi = md.psi_coefficients(m, 0, 3)
        assert np.allclose(psi, [1.0, 0.9, 0.45, 0.225])

    def test_against_long_division_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            p, q = rng.integers(0, 4, 2)
            phi = rng.uniform(-0.3, 0.3, p)
            theta = rng.uniform(-0.5, 0.5, q)
            m = SpharmaModel(0, [phi], [theta], np.array([1.0]))
            if not md.check_causal(m, margin=0.0).causal:
                continue
            psi = md.psi_coefficients(m, 0, 30)
            oracle = series_division_oracle(phi, theta, 30)
            assert np.abs(psi - oracle).max() < 1e-12

    def test_noncausal_rejected(self):
        m = SpharmaModel.uniform(0, ar=[1.0], noise=1.0)
        with pytest.raises(ValueError):
            md.psi_coefficients(m, 0, 5)

    def test_geometric_decay_envelope(self):
        m = SpharmaModel.uniform(0, ar=[0.4, 0.3], ma=[0.6], noise=1.0)
        rep = md.check_causal(m, margin=0.0)
        rho = 1.0 / rep.min_root_modulus * 1.05
        psi = np.abs(md.psi_coefficients(m, 0, 120))
        env = (psi[:30] / rho ** np.arange(30)).max()
        assert np.all(psi <= env * rho ** np.arange(121) + 1e-15)


class TestSpectralDensity:
    def test_sphar1_closed_form(self):
        m = SpharmaModel.uniform(2, ar=[0.5], noise=1.0)
        got = md.model_spectral_density(m, 1, 0.0)
        assert abs(got - 2.0 / math.pi) < 1e-14

    def test_flat_for_white_noise(self):
        m = SpharmaModel.white_noise(np.array([2 * math.pi]))
        lam = np.linspace(-math.pi, math.pi, 9)
        assert np.abs(md.model_spectral_density(m, 0, lam) - 1.0).max() < 1e-14

    def test_ma1_at_pi(self):
        m = SpharmaModel.uniform(0, ma=[0.5], noise=1.0)
        got = md.model_spectral_density(m, 0, math.pi)
        assert abs(got - 0.125 / math.pi) < 1e-15

    def test_unit_circle_pole_rejected(self):
        m = SpharmaModel.uniform(0, ar=[1.0], noise=1.0)
        with pytest.raises(ValueError):
            md.model_spectral_density(m, 0, 0.0)


class TestAutocovariance:
    def test_white_noise(self):
        m = SpharmaModel.white_noise(np.array([3.0]))
        acv = md.model_autocovariance(m, 0, 3)
        assert np.allclose(acv, [3.0, 0, 0, 0])

    def test_ar1_closed_form(self):
        m = SpharmaModel.uniform(0, ar=[0.5], noise=1.0)
        acv = md.model_autocovariance(m, 0, 5)
        expected = 0.5 ** np.arange(6) / 0.75
        assert np.abs(acv - expected).max() < 1e-12

    def test_matches_frequency_inversion(self):
        m = SpharmaModel.uniform(1, ar=[0.4], ma=[0.3], noise=1.2)
        spec = m.spectral()
        for t in range(4):
            direct = md.model_autocovariance(m, 1, t)[t]
            via_freq = spectral.autocov_from_spectral(spec, t)[1]
            assert abs(direct - via_freq) < 1e-8

    def test_density_integral_equals_lag_zero(self):
        m = SpharmaModel.uniform(2, ar=[0.6], ma=[-0.2], noise=0.8)
        integrals = m.spectral().integral_per_l()
        for l in range(3):
            c0 = md.model_autocovariance(m, l, 0)[0]
            assert abs(integrals[l] - c0) < 1e-8

    def test_psi_square_sum_identity(self):
        m = SpharmaModel.uniform(0, ar=[0.5, 0.2], ma=[0.4], noise=2.0)
        psi = md.psi_coefficients(m, 0, 400)
        c0 = md.model_autocovariance(m, 0, 0)[0]
        assert abs((psi @ psi) - c0 / 2.0) < 1e-10


class TestKernelOperator:
    def test_monopole_unit(self):
        assert abs(md.kernel_from_eigenvalues([FOUR_PI], 0.3) - 1.0) < 1e-14

    def test_dipole_linear(self):
        eigs = [0.0, FOUR_PI / 3.0]
        for c in (-0.5, 0.1, 0.9):
            assert abs(md.kernel_from_eigenvalues(eigs, c) - c) < 1e-14

    def test_eigenfunction_identity(self):
        # quadrature application of the kernel operator to Y_{l,m}
        L = 4
        grid = build_grid(L)
        eigs = np.array([1.0, 0.7, 0.5, 0.3, 0.2])
        TH, PH = np.meshgrid(grid.colatitudes, grid.longitudes, indexing="ij")
        lon_w = 2 * math.pi / grid.n_lon
        xyz = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH),
                        np.cos(TH)], axis=-1).reshape(-1, 3)
        w = np.outer(grid.colat_weights, np.full(grid.n_lon, lon_w)).ravel()
        for l, m in [(0, 0), (2, 1), (3, -2), (4, 4)]:
            f = real_sph_harm(l, m, TH.ravel(), PH.ravel())
            dots = np.clip(xyz @ xyz.T, -1.0, 1.0)
            K = md.kernel_from_eigenvalues(eigs, dots.ravel()).reshape(dots.shape)
            applied = K @ (w * f)
            assert np.abs(applied - eigs[l] * f).max() < 1e-10
