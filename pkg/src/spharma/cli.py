"""Command-line front end: simulate, spectrum, approximate, verify.

Exit codes: 0 ok, 2 invalid input, 3 I/O failure, 4 order budget exhausted,
5 verification failure. All JSON outputs carry ``"schema": 1`` and the hash
of the invoking configuration, so reruns with identical configs are
byte-stable and comparable.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import approx, simulate, spectral, sphere
from .model import SpharmaModel, canonical_hash, check_causal

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_VERIFY = 5


class InputError(Exception):
    pass


def _config_hash(args, command):
    # identifies the computation, not where its outputs land
    payload = {k: v for k, v in sorted(vars(args).items())
               if k not in ("func", "out")}
    payload["command"] = command
    return canonical_hash(payload)


def _load_model(path):
    if not os.path.exists(path):
        raise InputError(f"model file not found: {path}")
    try:
        return SpharmaModel.load(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"invalid model JSON: {exc}") from exc


def _load_target(path):
    """Spectral target: either a spectrum JSON or a model JSON."""
    if not os.path.exists(path):
        raise InputError(f"target file not found: {path}")
    with open(path) as fh:
        payload = json.load(fh)
    try:
        if "entries" in payload and "form" not in payload:
            return SpharmaModel.from_json(payload).spectral()
        return spectral.SpectralEigenvalues.from_json(payload)
    except (ValueError, KeyError) as exc:
        raise InputError(f"invalid spectral target: {exc}") from exc


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _truncate_model(model, lmax):
    if lmax is None or lmax >= model.band_limit:
        return model
    if lmax < 0:
        raise InputError("lmax must be nonnegative")
    return SpharmaModel(lmax, model.ar[: lmax + 1], model.ma[: lmax + 1],
                        model.noise[: lmax + 1])


def _truncate_series(series, lmax):
    if lmax is None or lmax >= series.band_limit:
        return series
    if lmax < 0:
        raise InputError("lmax must be nonnegative")
    rows = (lmax + 1) ** 2
    return simulate.HarmonicCoefficientSeries(lmax, series.values[:rows],
                                              dict(series.provenance))


def cmd_simulate(args):
    model = _truncate_model(_load_model(args.model), args.lmax)
    report = check_causal(model)
    print(f"causality: min root modulus {report.min_root_modulus:.6g}")
    if not report.causal:
        print(f"model not causal at multipoles {report.offending_multipoles}",
              file=sys.stderr)
        return EXIT_INPUT
    config = simulate.SimulationConfig(seed=args.seed, n=args.n,
                                       burn_in=args.burn_in)
    series = simulate.simulate_spharma(model, config)
    series.provenance["config_hash"] = _config_hash(args, "simulate")
    os.makedirs(args.out, exist_ok=True)
    series.save(os.path.join(args.out, "series.bin"))
    if args.snapshots:
        grid = sphere.build_grid(model.band_limit)
        for t in args.snapshots:
            if not (0 <= t < series.n):
                print(f"snapshot index {t} out of range", file=sys.stderr)
                return EXIT_INPUT
            snap = simulate.synthesize_field(series, grid, t)
            snap.to_csv(os.path.join(args.out, f"field_t{t}.csv"))
    print(f"wrote series ({series.n} steps, L={series.band_limit}) to {args.out}")
    return EXIT_OK


def cmd_spectrum(args):
    if args.model:
        model = _truncate_model(_load_model(args.model), args.lmax)
        acv = None
        try:
            from .model import model_autocovariance_table

            acv = model_autocovariance_table(model, args.max_lag)
        except ValueError as exc:
            print(f"cannot evaluate model spectrum: {exc}", file=sys.stderr)
            return EXIT_INPUT
        spec = model.spectral()
    else:
        series = _truncate_series(
            simulate.HarmonicCoefficientSeries.load(args.series), args.lmax)
        if args.max_lag >= series.n:
            print("max lag exceeds series length", file=sys.stderr)
            return EXIT_INPUT
        acv = simulate.empirical_autocov(series, args.max_lag)
        spec = spectral.spectral_from_autocov(acv)

    os.makedirs(args.out, exist_ok=True)
    chash = _config_hash(args, "spectrum")
    L = acv.band_limit
    rows = [(l, t, repr(float(acv.values[l, t])))
            for l in range(L + 1) for t in range(acv.max_lag + 1)]
    _write_csv(os.path.join(args.out, "autocovariance.csv"), ["l", "t", "C"], rows)

    lam = spectral.frequency_grid(args.n_lambda)
    F = spec.values(lam)
    rows = [(l, repr(float(lam[k])), repr(float(F[l, k])))
            for l in range(L + 1) for k in range(len(lam))]
    _write_csv(os.path.join(args.out, "spectral_density.csv"),
               ["l", "lambda", "f"], rows)

    trace = spectral.operator_trace_norm(spec, lam)
    _write_csv(os.path.join(args.out, "trace_norm.csv"), ["lambda", "trace"],
               [(repr(float(lam[k])), repr(float(trace[k])))
                for k in range(len(lam))])
    with open(os.path.join(args.out, "spectrum_meta.json"), "w") as fh:
        json.dump({"schema": 1, "config_hash": chash, "band_limit": L,
                   "max_lag": acv.max_lag}, fh, indent=1)
    print(f"wrote spectrum tables to {args.out}")
    return EXIT_OK


def cmd_approximate(args):
    target = _load_target(args.target)
    norm = "l2_kernel" if args.norm == "l2" else "trace"
    model, cert = approx.approximate_operator(target, args.eps, args.kind,
                                              norm=norm, order_cap=args.order_cap)
    os.makedirs(args.out, exist_ok=True)
    model.save(os.path.join(args.out, "fitted_model.json"))
    payload = cert.to_json()
    payload["config_hash"] = _config_hash(args, "approximate")
    with open(os.path.join(args.out, "certificate.json"), "w") as fh:
        json.dump(payload, fh, indent=1)
    status = "passed" if cert.passed else "FAILED"
    print(f"certificate {status}: total_l2={cert.total_l2:.3e} "
          f"total_trace={cert.total_trace:.3e} order={cert.order}")
    if cert.order_cap_reached and not cert.passed:
        return EXIT_BUDGET
    return EXIT_OK


def _check_stationarity(series, n_windows=8, z_max=4.0):
    means = []
    for chunk in np.array_split(series.values, n_windows, axis=1):
        per_stream = chunk.mean(axis=1)
        se = per_stream.std(ddof=1) / math.sqrt(len(per_stream))
        means.append(abs(per_stream.mean()) / max(se, 1e-300))
    worst = float(max(means))
    return {"name": "stationarity", "statistic": worst, "threshold": z_max,
            "passed": worst < z_max}


def _check_isotropy(series, z_max=5.0):
    worst = 0.0
    for l in range(1, series.band_limit + 1):
        block = series.block(l)
        variances = (block**2).mean(axis=1)
        ses = np.array([simulate.batch_means_se(row**2) for row in block])
        pooled = variances.mean()
        z = np.abs(variances - pooled) / np.maximum(ses, 1e-300)
        worst = max(worst, float(z.max()))
    return {"name": "isotropy", "statistic": worst, "threshold": z_max,
            "passed": worst < z_max}


def _check_cramer(series, n_bands):
    rep = simulate.verify_cramer_orthogonality(series, n_bands)
    return {"name": "cramer_orthogonality", "statistic": rep.max_abs_correlation,
            "threshold": rep.threshold, "passed": rep.passed}


def _check_ckl(series, z_max=4.0):
    """Realized vs predicted truncation error two multipoles below the band."""
    L = series.band_limit
    if L < 1:
        return {"name": "ckl_truncation", "statistic": 0.0, "threshold": z_max,
                "passed": True}
    l_cut = max(0, L - 2)
    acv = simulate.empirical_autocov(series, 0)
    deg = 2 * np.arange(L + 1) + 1
    predicted = float(deg[l_cut + 1 :] @ acv.values[l_cut + 1 :, 0] / (4 * math.pi))
    node = (1.1, 2.4)
    Y = sphere.harmonic_values_at(L, *node)
    flat = np.concatenate([Y[l, L - l : L + l + 1] if l > l_cut
                           else np.zeros(2 * l + 1) for l in range(L + 1)])
    err = (flat @ series.values) ** 2
    realized = float(err.mean())
    se = simulate.batch_means_se(err)
    z = abs(realized - predicted) / max(se, 1e-300)
    return {"name": "ckl_truncation", "statistic": z, "threshold": z_max,
            "passed": z < z_max}


def cmd_verify(args):
    try:
        series = simulate.HarmonicCoefficientSeries.load(args.series)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load series: {exc}", file=sys.stderr)
        return EXIT_INPUT
    known = {"stationarity": lambda: _check_stationarity(series),
             "isotropy": lambda: _check_isotropy(series),
             "cramer": lambda: _check_cramer(series, args.bands),
             "ckl": lambda: _check_ckl(series)}
    names = args.checks.split(",") if args.checks else list(known)
    results = []
    for name in names:
        if name not in known:
            print(f"unknown check {name!r}", file=sys.stderr)
            return EXIT_INPUT
        results.append(known[name]())
    report = {"schema": 1, "config_hash": _config_hash(args, "verify"),
              "checks": results, "passed": all(r["passed"] for r in results)}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify_report.json"), "w") as fh:
            json.dump(report, fh, indent=1)
    for r in results:
        print(f"{r['name']}: {'pass' if r['passed'] else 'FAIL'} "
              f"(stat {r['statistic']:.4g} vs {r['threshold']:.4g})")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spharma",
        description="Isotropic-stationary sphere-cross-time random fields: "
                    "simulation, spectra and ARMA approximation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a SPHARMA model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=None, dest="burn_in")
    p.add_argument("--snapshots", type=lambda s: [int(x) for x in s.split(",")],
                   default=None, help="comma-separated time indices to render")
    p.add_argument("--lmax", type=int, default=None,
                   help="restrict to multipoles l <= lmax")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spectrum", help="autocovariance/spectral tables")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--series")
    p.add_argument("--max-lag", type=int, default=50, dest="max_lag")
    p.add_argument("--n-lambda", type=int, default=512, dest="n_lambda")
    p.add_argument("--lmax", type=int, default=None,
                   help="restrict to multipoles l <= lmax")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("approximate", help="fit an MA/AR operator approximation")
    p.add_argument("--target", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--kind", choices=["ma", "ar"], required=True)
    p.add_argument("--norm", choices=["l2", "trace"], default="l2")
    p.add_argument("--order-cap", type=int, default=approx.DEFAULT_ORDER_CAP,
                   dest="order_cap")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_approximate)

    p = sub.add_parser("verify", help="second-order diagnostics on a series")
    p.add_argument("--series", required=True)
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--checks", default=None,
                   help="comma list from stationarity,isotropy,cramer,ckl")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "eps", None) is not None and args.eps <= 0:
        print("eps must be positive", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "n", None) is not None and args.n < 1:
        print("n must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
