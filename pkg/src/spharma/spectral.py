"""Second-order calculus for isotropic-stationary sphere-cross-time fields.

Per multipole l, the lag-t covariance of the harmonic coefficients is C_l(t)
and its Fourier transform over lags,

    f_l(lambda) = (1/2pi) * sum_t exp(-i t lambda) C_l(t),

gives the eigenvalues of the frequency-lambda spectral density operator. The
covariance kernel at lag t is the Legendre synthesis

    r_t(x, y) = sum_l (2l+1)/(4pi) * C_l(t) * P_l(<x, y>).

Frequencies live on [-pi, pi]; frequency integrals use the composite
trapezoid rule on a uniform grid (spectrally accurate for these smooth
periodic integrands). Band tails above the stored band limit are carried as
explicit ``tail_bound`` metadata rather than silently dropped.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .sphere import legendre_all

DEFAULT_FREQ_INTERVALS = 4096

TWO_PI = 2.0 * math.pi


def frequency_grid(n_intervals=DEFAULT_FREQ_INTERVALS):
    """Uniform grid on [-pi, pi] with ``n_intervals`` panels (endpoints included)."""
    return np.linspace(-math.pi, math.pi, n_intervals + 1)


def abs2_on_circle(coeffs, lams):
    """|p(e^{i*lambda})|^2 for the real polynomial p(z) = sum_k coeffs[k] z^k."""
    coeffs = np.asarray(coeffs, dtype=float)
    lams = np.asarray(lams, dtype=float)
    k = np.arange(len(coeffs))
    arg = np.multiply.outer(lams, k)
    re = np.cos(arg) @ coeffs
    im = np.sin(arg) @ coeffs
    return re * re + im * im


def _geometric_tail(last, prev):
    """Tail estimate sum_{t>T} |c_t| from the last two stored magnitudes."""
    last, prev = abs(last), abs(prev)
    if last == 0.0:
        return 0.0
    if prev <= last:
        return math.inf
    r = last / prev
    return last * r / (1.0 - r)


@dataclass
class AutocovarianceSpectrum:
    """Angular power spectra C_l(t) for l <= band_limit, |t| <= max_lag.

    Negative lags follow from the real-process symmetry C_l(-t) = C_l(t).
    ``tail_bound`` bounds sum_{l > band_limit} (2l+1) C_l(0); it is zero for
    exactly band-limited processes.
    """

    band_limit: int
    max_lag: int
    values: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.band_limit + 1, self.max_lag + 1):
            raise ValueError("values must have shape (band_limit+1, max_lag+1)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("autocovariances must be finite")
        if self.tail_bound < 0.0:
            raise ValueError("tail_bound must be nonnegative")
        lag0 = self.values[:, 0]
        if np.any(lag0 < -1e-12 * (1.0 + np.abs(self.values).max())):
            raise ValueError("lag-0 autocovariances must be nonnegative")
        # Cauchy-Schwarz |C_l(t)| <= C_l(0), up to estimator roundoff
        slack = 1e-8 * (1.0 + lag0) + 1e-12
        if np.any(np.abs(self.values) > lag0[:, None] + slack[:, None]):
            raise ValueError("|C_l(t)| exceeds C_l(0): not a valid autocovariance")

    @property
    def total_variance(self):
        """sum_l (2l+1) C_l(0) over the stored band."""
        deg = 2 * np.arange(self.band_limit + 1) + 1
        return float(deg @ self.values[:, 0])

    def to_json(self):
        return {
            "schema": 1,
            "band_limit": self.band_limit,
            "max_lag": self.max_lag,
            "C": self.values.tolist(),
            "tail_bound": self.tail_bound,
        }

    @classmethod
    def from_json(cls, payload):
        return cls(
            band_limit=int(payload["band_limit"]),
            max_lag=int(payload["max_lag"]),
            values=np.asarray(payload["C"], dtype=float),
            tail_bound=float(payload.get("tail_bound", 0.0)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


class SpectralEigenvalues:
    """Eigenvalues f_l(lambda) of the spectral density operator.

    Either rational per multipole (ARMA form ``noise/(2pi) |theta|^2/|phi|^2``
    on the unit circle) or tabulated on a stored frequency grid. ``tail_bound``
    bounds sup_lambda sum_{l > band_limit} (2l+1) f_l(lambda).
    """

    def __init__(self, band_limit, form, *, entries=None, lambda_grid=None,
                 table=None, tail_bound=0.0):
        self.band_limit = int(band_limit)
        self.form = form
        self.tail_bound = float(tail_bound)
        if self.tail_bound < 0.0:
            raise ValueError("tail_bound must be nonnegative")
        if form == "rational":
            if entries is None or len(entries) != self.band_limit + 1:
                raise ValueError("rational form needs one (ar, ma, noise) per l")
            self.entries = [
                (np.asarray(ar, dtype=float), np.asarray(ma, dtype=float), float(noise))
                for ar, ma, noise in entries
            ]
            for _, _, noise in self.entries:
                if noise <= 0.0:
                    raise ValueError("noise power must be positive")
            self.lam = None
            self.table = None
        elif form == "tabulated":
            self.lam = np.asarray(lambda_grid, dtype=float)
            self.table = np.asarray(table, dtype=float)
            if self.table.shape != (self.band_limit + 1, len(self.lam)):
                raise ValueError("table must have shape (band_limit+1, len(grid))")
            if np.any(self.table < 0.0):
                raise ValueError("spectral eigenvalues must be nonnegative")
            self.entries = None
        else:
            raise ValueError("form must be 'rational' or 'tabulated'")

    @classmethod
    def rational(cls, entries, tail_bound=0.0):
        return cls(len(entries) - 1, "rational", entries=entries, tail_bound=tail_bound)

    @classmethod
    def tabulated(cls, lambda_grid, table, tail_bound=0.0):
        table = np.asarray(table, dtype=float)
        return cls(table.shape[0] - 1, "tabulated", lambda_grid=lambda_grid,
                   table=table, tail_bound=tail_bound)

    def lambda_grid(self, n_intervals=None):
        if self.form == "tabulated":
            return self.lam
        return frequency_grid(n_intervals or DEFAULT_FREQ_INTERVALS)

    def values(self, lams=None):
        """f_l on ``lams`` (default: the natural grid), shape (L+1, n_lams).

        Tabulated spectra are linearly interpolated off their stored grid.
        """
        if lams is None:
            lams = self.lambda_grid()
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        if self.form == "rational":
            out = np.empty((self.band_limit + 1, len(lams)))
            for l, (ar, ma, noise) in enumerate(self.entries):
                num = abs2_on_circle(np.r_[1.0, ma], lams)
                den = abs2_on_circle(np.r_[1.0, -ar], lams)
                if np.any(den < 1e-24):
                    raise ValueError(f"AR polynomial vanishes on the unit circle at l={l}")
                out[l] = noise / TWO_PI * num / den
            return out
        if lams.shape == self.lam.shape and np.allclose(lams, self.lam):
            return self.table
        return np.vstack([np.interp(lams, self.lam, row) for row in self.table])

    def integral_per_l(self):
        """integral of f_l over [-pi, pi] per multipole (equals C_l(0))."""
        lam = self.lambda_grid()
        return np.trapezoid(self.values(lam), lam, axis=1)

    def to_json(self):
        payload = {"schema": 1, "form": self.form, "band_limit": self.band_limit,
                   "tail_bound": self.tail_bound}
        if self.form == "rational":
            payload["rational"] = [
                {"l": l, "ar": ar.tolist(), "ma": ma.tolist(), "noise": noise}
                for l, (ar, ma, noise) in enumerate(self.entries)
            ]
        else:
            payload["lambda_grid"] = self.lam.tolist()
            payload["f"] = self.table.tolist()
        return payload

    @classmethod
    def from_json(cls, payload):
        tail = float(payload.get("tail_bound", 0.0))
        if payload["form"] == "rational":
            rows = sorted(payload["rational"], key=lambda r: r["l"])
            entries = [(r["ar"], r["ma"], r["noise"]) for r in rows]
            return cls.rational(entries, tail_bound=tail)
        return cls.tabulated(payload["lambda_grid"], payload["f"], tail_bound=tail)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def covariance_kernel_eval(acv, t, c):
    """Covariance kernel r_t at inner product c: Legendre synthesis of C_l(t)."""
    if abs(t) > acv.max_lag:
        raise ValueError("lag out of range")
    L = acv.band_limit
    deg = 2 * np.arange(L + 1) + 1
    coeff = deg / (4.0 * math.pi) * acv.values[:, abs(t)]
    P = legendre_all(L, c)
    return coeff @ P if np.ndim(P) > 1 else float(coeff @ P)


def kernel_l2_norm(acv, t):
    """L2(S2 x S2) norm of the lag-t kernel: sqrt(sum_l (2l+1) C_l(t)^2)."""
    if abs(t) > acv.max_lag:
        raise ValueError("lag out of range")
    deg = 2 * np.arange(acv.band_limit + 1) + 1
    return float(np.sqrt(deg @ acv.values[:, abs(t)] ** 2))


def operator_trace_norm(spec, lam):
    """Trace norm sum_l (2l+1) f_l(lambda), plus any stored band tail bound."""
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    deg = 2 * np.arange(spec.band_limit + 1) + 1
    tr = deg @ spec.values(lam_arr) + spec.tail_bound
    return float(tr[0]) if np.isscalar(lam) or np.ndim(lam) == 0 else tr


def spectral_from_autocov(acv, n_intervals=None, tail_tol=1e-8):
    """Tabulate f_l(lambda) = (1/2pi) sum_{|t|<=max_lag} e^{-it lambda} C_l(t).

    The sum over stored lags is exact; a geometric estimate of the dropped
    tail triggers a warning above ``tail_tol`` (relative to the peak value)
    and sets the clipping allowance for truncation-induced negatives. Values
    below that allowance raise, so genuinely invalid inputs are not masked.
    """
    lam = frequency_grid(n_intervals or DEFAULT_FREQ_INTERVALS)
    L, T = acv.band_limit, acv.max_lag
    t = np.arange(1, T + 1)
    cos_tab = np.cos(np.outer(lam, t))
    f = (acv.values[:, 0][None, :] + 2.0 * cos_tab @ acv.values[:, 1:].T).T / TWO_PI

    tail = 0.0
    if T >= 2:
        tails = [_geometric_tail(acv.values[l, T], acv.values[l, T - 1])
                 for l in range(L + 1)]
        tail = max(tails)
    scale = max(np.abs(f).max(), 1.0)
    if not math.isfinite(tail):
        warnings.warn("stored autocovariances do not decay; spectral tail unbounded")
        tail = scale
    elif tail / math.pi > tail_tol * scale:
        warnings.warn(
            f"autocovariance truncation tail estimate {tail:.3g} exceeds tolerance")
    allowance = tail / math.pi + 1e-12 * scale
    if np.any(f < -allowance):
        raise ValueError("spectral density significantly negative: invalid input")
    f = np.maximum(f, 0.0)
    return SpectralEigenvalues.tabulated(lam, f, tail_bound=acv.tail_bound)


def autocov_from_spectral(spec, t, check_tol=1e-9):
    """C_l(t) = integral of f_l(lambda) e^{i t lambda} by trapezoid quadrature.

    Real parts are returned; for symmetric spectra the imaginary residual
    vanishes and quadrature convergence is checked against a half-resolution
    pass (mismatch beyond ``check_tol`` relative emits a warning).
    """
    lam = spec.lambda_grid()
    F = spec.values(lam)
    ct = np.cos(t * lam)
    out = np.trapezoid(F * ct, lam, axis=1)
    imag = np.trapezoid(F * np.sin(t * lam), lam, axis=1)
    scale = max(1.0, np.abs(out).max())
    if np.abs(imag).max() > 1e-8 * scale:
        warnings.warn("imaginary residual in inversion integral is not negligible")
    coarse = np.trapezoid(F[:, ::2] * ct[::2], lam[::2], axis=1)
    if np.abs(out - coarse).max() > max(check_tol * scale, 1e-12):
        warnings.warn(f"frequency quadrature may not have converged at lag {t}")
    return out


def autocov_table(spec, max_lag):
    """AutocovarianceSpectrum with lags 0..max_lag recovered from a spectrum."""
    lam = spec.lambda_grid()
    F = spec.values(lam)
    ts = np.arange(max_lag + 1)
    cos_tab = np.cos(np.outer(ts, lam))
    # trapezoid weights on the uniform grid
    w = np.full(len(lam), lam[1] - lam[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    vals = (F * w) @ cos_tab.T
    # sum_{l>L} (2l+1) C_l(0) <= 2pi * sup_lambda tail of the trace sum
    return AutocovarianceSpectrum(spec.band_limit, max_lag, vals,
                                  tail_bound=TWO_PI * spec.tail_bound)


@dataclass
class SummabilityReport:
    """Short-memory diagnostics: summed kernel norms over lags plus tail."""

    kernel_l2_sum: float
    trace_sum: float
    tail_estimate: float
    divergent: bool
    max_lag: int


def summability_report(source, max_lag=200):
    """Summability sums over |t| <= max_lag for an acv table or an ARMA model.

    For models the geometric tail uses the uniform root margin: the lag
    envelope decays like (1/xi_*)^t, so the tail beyond the last stored lag
    is estimated from the final trace term. A non-causal model (or a
    non-decaying table) sets the divergence flag instead of raising.
    """
    from .model import SpharmaModel, check_causal, model_autocovariance_table

    if isinstance(source, SpharmaModel):
        report = check_causal(source, margin=0.0)
        # roots strictly outside the closed disk; a unit root diverges
        if not report.causal or report.min_root_modulus <= 1.0:
            return SummabilityReport(math.inf, math.inf, math.inf, True, max_lag)
        acv = model_autocovariance_table(source, max_lag)
        rho = 0.0 if math.isinf(report.min_root_modulus) else 1.0 / report.min_root_modulus
    else:
        acv = source
        max_lag = acv.max_lag
        rho = None

    deg = 2 * np.arange(acv.band_limit + 1) + 1
    l2_terms = np.sqrt(deg @ acv.values**2)
    tr_terms = deg @ np.abs(acv.values)
    kernel_l2_sum = float(l2_terms[0] + 2.0 * l2_terms[1:].sum())
    trace_sum = float(tr_terms[0] + 2.0 * tr_terms[1:].sum())

    if rho is not None:
        tail = 0.0 if rho == 0.0 else float(2.0 * tr_terms[-1] * rho / (1.0 - rho))
        divergent = False
    else:
        tail = 2.0 * _geometric_tail(tr_terms[-1], tr_terms[-2]) if acv.max_lag >= 2 else 0.0
        divergent = not math.isfinite(tail)
    return SummabilityReport(kernel_l2_sum, trace_sum, tail, divergent, acv.max_lag)


def ckl_truncation_error(spec, l_trunc):
    """Mean-square error of truncating the harmonic expansion at l_trunc.

    sum_{l > l_trunc} (2l+1)/(4pi) * integral(f_l), including the stored
    above-band tail bound (a sup bound, integrated over [-pi, pi]).
    """
    if l_trunc > spec.band_limit:
        raise ValueError("l_trunc exceeds band limit")
    integrals = spec.integral_per_l()
    deg = 2 * np.arange(spec.band_limit + 1) + 1
    inside = deg[l_trunc + 1 :] @ integrals[l_trunc + 1 :] / (4.0 * math.pi)
    tail = spec.tail_bound * TWO_PI / (4.0 * math.pi)
    return float(inside + tail)
