"""SPHARMA(p, q) models: per-multipole ARMA recursions on the sphere.

A model stores, for every multipole l up to its band limit, the AR
coefficients phi_{l;1..p_l}, MA coefficients theta_{l;1..q_l} and the white
noise power C_{l;Z} > 0. The associated lag polynomials are

    phi_l(z)   = 1 - phi_{l;1} z - ... - phi_{l;p} z^p
    theta_l(z) = 1 + theta_{l;1} z + ... + theta_{l;q} z^q

and the process is causal (invertible) when all AR (MA) roots lie strictly
outside the closed unit disk, uniformly over l. Actual degrees may differ
across multipoles; coefficient arrays are ragged and p, q report the maxima.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    TWO_PI,
    AutocovarianceSpectrum,
    SpectralEigenvalues,
    abs2_on_circle,
)

_DEGENERATE = 1e-14


def canonical_hash(payload):
    """Stable short hash of a JSON-serializable payload."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SpharmaModel:
    """Per-multipole ARMA coefficients and noise powers up to a band limit."""

    band_limit: int
    ar: list
    ma: list
    noise: np.ndarray

    def __post_init__(self):
        n = self.band_limit + 1
        if len(self.ar) != n or len(self.ma) != n:
            raise ValueError("need one AR and one MA coefficient array per l")
        self.ar = [np.asarray(a, dtype=float) for a in self.ar]
        self.ma = [np.asarray(a, dtype=float) for a in self.ma]
        self.noise = np.asarray(self.noise, dtype=float)
        if self.noise.shape != (n,):
            raise ValueError("noise must hold one positive power per l")
        if np.any(self.noise <= 0.0):
            raise ValueError("noise powers C_{l;Z} must be strictly positive")

    @property
    def p(self):
        return max((len(a) for a in self.ar), default=0)

    @property
    def q(self):
        return max((len(a) for a in self.ma), default=0)

    @classmethod
    def white_noise(cls, noise):
        noise = np.asarray(noise, dtype=float)
        L = len(noise) - 1
        return cls(L, [np.empty(0)] * (L + 1), [np.empty(0)] * (L + 1), noise)

    @classmethod
    def uniform(cls, band_limit, ar=(), ma=(), noise=1.0):
        """Same coefficients at every multipole; scalar or per-l noise."""
        noise_arr = np.broadcast_to(np.asarray(noise, dtype=float),
                                    (band_limit + 1,)).copy()
        return cls(band_limit,
                   [np.asarray(ar, dtype=float)] * (band_limit + 1),
                   [np.asarray(ma, dtype=float)] * (band_limit + 1),
                   noise_arr)

    def spectral(self, tail_bound=0.0):
        """Exact rational spectral eigenvalues of the model."""
        entries = [(self.ar[l], self.ma[l], float(self.noise[l]))
                   for l in range(self.band_limit + 1)]
        return SpectralEigenvalues.rational(entries, tail_bound=tail_bound)

    def to_json(self):
        return {
            "schema": 1,
            "band_limit": self.band_limit,
            "entries": [
                {"l": l, "ar": self.ar[l].tolist(), "ma": self.ma[l].tolist(),
                 "noise": float(self.noise[l])}
                for l in range(self.band_limit + 1)
            ],
        }

    @classmethod
    def from_json(cls, payload):
        L = int(payload["band_limit"])
        ar = [np.empty(0)] * (L + 1)
        ma = [np.empty(0)] * (L + 1)
        noise = np.full(L + 1, np.nan)
        for entry in payload["entries"]:
            l = int(entry["l"])
            ar[l] = np.asarray(entry["ar"], dtype=float)
            ma[l] = np.asarray(entry["ma"], dtype=float)
            noise[l] = float(entry["noise"])
        if np.any(np.isnan(noise)):
            raise ValueError("model JSON missing entries for some multipoles")
        return cls(L, ar, ma, noise)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def content_hash(self):
        return canonical_hash(self.to_json())


@dataclass
class CausalityReport:
    """Outcome of a root-margin check over all multipoles."""

    causal: bool
    min_root_modulus: float
    offending_multipoles: list = field(default_factory=list)
    margin: float = 0.0


def lag_polynomial_roots(coeffs, kind="ar"):
    """Roots of 1 -/+ c_1 z - ... for AR / 1 + c_1 z + ... for MA coefficients.

    Companion-matrix eigenvalues via ``np.roots``; trailing near-zero
    coefficients are dropped so degenerate polynomials report no roots.
    """
    c = np.asarray(coeffs, dtype=float)
    sign = -1.0 if kind == "ar" else 1.0
    poly = np.r_[1.0, sign * c]
    scale = np.abs(poly).max()
    nz = np.nonzero(np.abs(poly) > _DEGENERATE * scale)[0]
    if len(nz) == 0 or nz[-1] == 0:
        return np.empty(0, dtype=complex)
    poly = poly[: nz[-1] + 1]
    return np.roots(poly[::-1])


def _root_margin_report(coeff_lists, margin, kind):
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    min_mod = math.inf
    offending = []
    for l, coeffs in enumerate(coeff_lists):
        roots = lag_polynomial_roots(coeffs, kind=kind)
        if len(roots) == 0:
            continue
        mod = float(np.abs(roots).min())
        min_mod = min(min_mod, mod)
        if mod < 1.0 + margin:
            offending.append(l)
    return CausalityReport(not offending, min_mod, offending, margin)


def check_causal(model, margin=1e-6):
    """All AR roots at modulus >= 1 + margin, per multipole."""
    return _root_margin_report(model.ar, margin, "ar")


def check_invertible(model, margin=1e-6):
    """All MA roots at modulus >= 1 + margin, per multipole."""
    return _root_margin_report(model.ma, margin, "ma")


def check_coprime(model, tol=1e-8):
    """Per-l flag: every AR root at distance > tol from every MA root."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    out = np.ones(model.band_limit + 1, dtype=bool)
    for l in range(model.band_limit + 1):
        ra = lag_polynomial_roots(model.ar[l], "ar")
        rm = lag_polynomial_roots(model.ma[l], "ma")
        if len(ra) and len(rm):
            dist = np.abs(ra[:, None] - rm[None, :]).min()
            out[l] = dist > tol
    return out


def _multipole_root_margin(model, l):
    roots = lag_polynomial_roots(model.ar[l], "ar")
    return math.inf if len(roots) == 0 else float(np.abs(roots).min())


def psi_coefficients(model, l, count):
    """Power-series coefficients psi_{l;0..count} of theta_l(z)/phi_l(z).

    psi_0 = 1 and psi_j = theta_j [j <= q] + sum_{k<=min(j,p)} phi_k psi_{j-k}.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if _multipole_root_margin(model, l) <= 1.0:
        raise ValueError(f"multipole {l} is not causal")
    phi, theta = model.ar[l], model.ma[l]
    psi = np.zeros(count + 1)
    psi[0] = 1.0
    for j in range(1, count + 1):
        acc = theta[j - 1] if j <= len(theta) else 0.0
        kmax = min(j, len(phi))
        if kmax:
            acc += phi[:kmax] @ psi[j - 1 :: -1][:kmax]
        psi[j] = acc
    return psi


def model_spectral_density(model, l, lam):
    """f_l(lambda) = C_{l;Z}/(2pi) * |theta_l(e^{i lam})|^2 / |phi_l(e^{i lam})|^2."""
    scalar = np.isscalar(lam) or np.ndim(lam) == 0
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    num = abs2_on_circle(np.r_[1.0, model.ma[l]], lam_arr)
    den = abs2_on_circle(np.r_[1.0, -model.ar[l]], lam_arr)
    if np.any(den < 1e-24):
        raise ValueError(f"AR polynomial at l={l} vanishes on the unit circle")
    out = model.noise[l] / TWO_PI * num / den
    return float(out[0]) if scalar else out


def _psi_truncation_order(model, l, tol=1e-12):
    """Smallest J with rho^J/(1-rho) * (1 + sum|theta|) below tol."""
    xi = _multipole_root_margin(model, l)
    q = len(model.ma[l])
    if math.isinf(xi):
        return q
    if xi <= 1.0:
        raise ValueError(f"multipole {l} is not causal")
    rho = 1.0 / xi
    env = 1.0 + float(np.abs(model.ma[l]).sum())
    J = int(math.ceil(math.log(tol * (1.0 - rho) / env) / math.log(rho)))
    J = max(J, q + len(model.ar[l]) + 8)
    if J > 200000:
        warnings.warn(f"root margin at l={l} is tiny; capping psi expansion")
        J = 200000
    return J


def model_autocovariance(model, l, max_lag):
    """Exact C_l(0..max_lag) = C_{l;Z} sum_j psi_j psi_{j+t}, certified tail.

    The psi series is truncated where its geometric envelope drops below
    1e-12 (from the multipole's root margin), so the returned values carry
    no visible truncation error for the margins in scope.
    """
    J = _psi_truncation_order(model, l)
    psi = psi_coefficients(model, l, J + max_lag)
    head = psi[: J + 1]
    out = np.empty(max_lag + 1)
    for t in range(max_lag + 1):
        out[t] = head @ psi[t : t + J + 1]
    return model.noise[l] * out


def model_autocovariance_table(model, max_lag):
    vals = np.vstack([model_autocovariance(model, l, max_lag)
                      for l in range(model.band_limit + 1)])
    return AutocovarianceSpectrum(model.band_limit, max_lag, vals)


def kernel_from_eigenvalues(eigs, c):
    """Isotropic kernel k(c) = sum_l eig_l (2l+1)/(4pi) P_l(c) from eigenvalues."""
    from .sphere import legendre_all

    eigs = np.asarray(eigs, dtype=float)
    L = len(eigs) - 1
    deg = 2 * np.arange(L + 1) + 1
    coeff = eigs * deg / (4.0 * math.pi)
    P = legendre_all(L, c)
    return coeff @ P if np.ndim(P) > 1 else float(coeff @ P)
