"""Command-line front end: run-ids, fit-lifshitz, verify-bounds, band-sweep, print-schema.

Exit codes: 0 success, 1 invariant violation or starvation under policy "error",
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bounds, specfun
from .config import (
    BAND_SCHEMA,
    SCHEMA,
    ConfigError,
    config_hash,
    finite_or_none,
    load_toml,
    provenance,
    provenance_line,
    read_curve_csv,
    validate_band,
    validate_run,
    write_curve_csv,
    write_json,
)
from .engine import StarvationWarning, band_sweep, reduced_ids
from .fit import CAVEAT, SIGN_NOTE, InsufficientPoints, fit_lifshitz
from .geometry import rational_flux_cell

SELECTORS = ("laguerre", "determinant", "delta", "mass-ratio", "schedule", "combes-thomas",
             "large-deviation")


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"landau-ids: error: {msg}", file=sys.stderr)


def _out_dir(args, cfg: dict | None = None) -> Path:
    out = Path(args.out) if args.out else Path((cfg or {}).get("output", {}).get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- run-ids


def cmd_run_ids(args) -> int:
    if not args.config:
        raise UsageError("run-ids needs --config PATH")
    data = load_toml(args.config)
    if args.seed is not None:
        data.setdefault("disorder", {})["seed"] = args.seed
    setup = validate_run(data)
    cfg = setup.config
    out = _out_dir(args, cfg)
    # --out and --threads do not change results, so they stay out of the hashed config
    cfg_hashed = {k: v for k, v in cfg.items() if k != "output"}
    prov = provenance(cfg_hashed)
    smp = cfg["sampling"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = reduced_ids(
            cfg["level"]["q"], setup.lattice, setup.potential, setup.disorder, setup.energies,
            theta_per_side=smp["theta_per_side"], samples=smp["samples"], seed=cfg["disorder"]["seed"],
            threads=args.threads, chunk=smp["chunk"], max_window=smp["max_window"],
        )
    notes = [str(w.message) for w in caught]
    b = setup.lattice.b
    write_curve_csv(out / "ids_curve.csv", curve.energies, curve.values, curve.stderr, prov,
                    comments=[f"E in absolute units (E/2b = E / {2 * b!r}); value is states per unit area"])
    meta = {
        "provenance": prov,
        "config": cfg_hashed,
        "run": {k: finite_or_none(v) if isinstance(v, float) else v for k, v in curve.meta.items()},
        "nonzero_counts": curve.nonzero.tolist(),
        "energies_over_2b": (curve.energies / (2 * b)).tolist(),
        "warnings": notes,
    }
    write_json(out / "meta.json", meta)
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    print(f"wrote {out / 'ids_curve.csv'} and {out / 'meta.json'}")
    if curve.meta["starved"] and cfg["policy"]["starvation"] == "error":
        _err(f"starvation: {notes[-1] if notes else 'too few nonzero samples'}; "
             "raise sampling.samples or energies.min")
        return 1
    return 0


# ---------------------------------------------------------------- fit-lifshitz


def _family_params(potential: dict) -> tuple[str, dict]:
    fam = potential["family"]
    return fam, {k: v for k, v in potential.items() if k != "family"}


def cmd_fit_lifshitz(args) -> int:
    curve_path = Path(args.curve)
    if not curve_path.is_file():
        raise ConfigError(f"curve file not found: {curve_path}")
    E, v, s = read_curve_csv(curve_path)
    meta_path = Path(args.meta) if args.meta else curve_path.with_name("meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else None
    if args.b is not None:
        b = args.b
    elif meta is not None:
        b = float(meta["run"]["lattice"]["b"])
    else:
        raise UsageError(f"no {meta_path}; pass --b and --family")
    family, params = (None, {})
    if meta is not None:
        family, params = _family_params(meta["run"]["potential"])
    if args.family:
        family = args.family
    for item in args.param or []:
        key, _, val = item.partition("=")
        if not _:
            raise UsageError(f"--param expects key=value, got {item!r}")
        params[key] = float(val)
    if family is None:
        raise UsageError("family unknown; pass --family")
    window = tuple(args.window) if args.window else None
    try:
        fit = fit_lifshitz(E, v, s, family, params, b, window=window, min_points=args.min_points)
    except InsufficientPoints as exc:
        _err(f"insufficient points: {exc}")
        return 1
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"fit: {exc}") from exc
    report = fit.as_dict()
    report["curve"] = str(curve_path)
    report["provenance"] = provenance({"curve_sha": config_hash({"E": E, "v": v, "s": s}),
                                       "family": family, "params": params, "window": window})
    out = _out_dir(args)
    write_json(out / "lifshitz_fit.json", report)
    tgt = fit.target
    tgt_s = f"[{tgt[0]:.4g}, {tgt[1]:.4g}]" if isinstance(tgt, tuple) else f"{tgt:.4g}"
    print(f"# {SIGN_NOTE}")
    print(f"# {CAVEAT}")
    print(f"family={family} regressor={fit.regressor} points={fit.points} "
          f"window(E/2b)=[{fit.window[0]:.4g}, {fit.window[1]:.4g}]")
    print(f"slope={fit.slope:.6g} |slope|={fit.magnitude:.6g} target={tgt_s} "
          f"deviation={fit.deviation:.4g} R2={fit.r2:.4f}")
    return 0


# ---------------------------------------------------------------- verify-bounds


def _row(suite, case, value, bound, ok, note="") -> dict:
    return {"suite": suite, "case": case, "value": value, "bound": bound, "pass": bool(ok), "note": note}


def probe_laguerre() -> list[dict]:
    rows = []
    for q in range(5):
        bad = [t for t in specfun.upper_sweep(q_max=q, j_max=300) if t[0] == q]
        note = f"first failure j={bad[0][1]} xi={bad[0][2]}" if bad else "j<=300, xi in [0,3] step 0.05"
        rows.append(_row("laguerre-upper", f"q={q}", len(bad), 0, not bad, note))
    for q in range(4):
        j0 = specfun.lower_threshold(q)
        rows.append(_row("laguerre-lower", f"q={q}", j0 if j0 is not None else "none", "finite",
                         j0 is not None, "j0 over j<=2000, xi in [0,0.5]"))
    return rows


def probe_determinant(count: int = 1000) -> list[dict]:
    rows = []
    for k, chk in enumerate(bounds.determinant_suite(count=count, seed=0)):
        note = (f"lower={chk.lower!r} lower_ok={chk.lower_ok} "
                f"rank_one_upper={chk.upper_corrected!r} rank_one_ok={chk.corrected_ok}")
        rows.append(_row("determinant", f"#{k} q={chk.q} p={chk.p} rho={chk.rho:.6g}", chk.value,
                         chk.upper, chk.ok, note))
    return rows


def probe_delta() -> list[dict]:
    rows = []
    for q in range(7):
        for p in range(11):
            d = bounds.delta_q_recurrence(q, p)
            ok = d.exact_agreement and d.relative_gap <= 1e-10 and d.lower_ok
            rows.append(_row("delta", f"q={q} p={p}", d.relative_gap, 1e-10, ok,
                             f"direct={d.direct!r} lower={d.lower!r}"))
    return rows


def probe_mass_ratio() -> list[dict]:
    rows = []
    C = bounds.frozen_mass_constant()
    for label, seed in (("calibration", 2024), ("holdout", 77)):
        for q, m, l, g, c in bounds.mass_ratio_cases(seed):
            r = bounds.mass_ratio_check(q, m, l, g, c, C=C)
            rows.append(_row(f"mass-ratio-{label}", f"q={q} m={m} l={l:g} gamma=({g[0]:.4g},{g[1]:.4g})",
                             r.ratio, r.bound, r.ok, f"C={C} required={r.required_C:.4g}"))
    return rows


def probe_schedule() -> list[dict]:
    rows = []
    for case in (bounds.PowerLawCase(), bounds.ExponentialCase(), bounds.SuperGaussianCase()):
        th = bounds.schedule_threshold(case)
        name = type(case).__name__.removesuffix("Case").lower()
        ok = th.log10_E_star is not None
        rows.append(_row("schedule", name, th.log10_E_star if ok else "none", "finite", ok,
                         "log10 of the largest E below which both constraints hold"))
    return rows


def probe_combes_thomas(zs=(0.55, 0.7, 0.9), b: float = 1.0) -> list[dict]:
    Q = bounds.torus_alloy(b)
    fits = [bounds.combes_thomas_probe(b, Q=Q, z=z) for z in zs]
    rows = [_row("combes-thomas", f"z={f.z.real:g}", f.rate, 0.0, f.rate > 0,
                 f"eta={f.eta:.4g} dist={f.dist:.4g} rate/eta={f.rate_over_eta:.4g}") for f in fits]
    by_eta = [f.rate for f in sorted(fits, key=lambda f: f.eta)]
    ordered = all(x < y for x, y in zip(by_eta, by_eta[1:]))
    rows.append(_row("combes-thomas", "ordering", "monotone" if ordered else "not monotone",
                     "rate increases with eta", ordered, "disordered torus alloy, b=1"))
    return rows


def probe_large_deviation(samples: int = 20000) -> list[dict]:
    rows = []
    for kappa in (0.5, 1.0, 2.0):
        for l in (2.0, 4.0, 8.0):
            for t in (0.05, 0.1, 0.2):
                r = bounds.large_deviation_probe(kappa, l, t, samples, seed=0)
                note = f"hits={r.hits} sites={r.sites} log_chernoff={r.log_chernoff:.4g}"
                if r.log_exact is not None:
                    note += f" log_exact={r.log_exact:.4g}"
                rows.append(_row("large-deviation", f"kappa={kappa:g} l={l:g} t={t:g}", r.empirical,
                                 math.exp(r.log_bound), r.ok, note))
    return rows


PROBES = {
    "laguerre": probe_laguerre,
    "determinant": probe_determinant,
    "delta": probe_delta,
    "mass-ratio": probe_mass_ratio,
    "schedule": probe_schedule,
    "combes-thomas": probe_combes_thomas,
    "large-deviation": probe_large_deviation,
}


def cmd_verify_bounds(args) -> int:
    chosen = list(SELECTORS) if args.selector == "all" else [args.selector]
    rows = []
    for name in chosen:
        t0 = time.perf_counter()
        part = PROBES[name]()
        bad = sum(not r["pass"] for r in part)
        print(f"{name}: {len(part) - bad}/{len(part)} pass ({time.perf_counter() - t0:.1f} s)")
        rows.extend(part)
    out = _out_dir(args)
    path = out / "bounds_summary.csv"
    prov = provenance({"selector": args.selector})
    bounds.write_rows_csv(path, rows, [provenance_line(prov)])
    failing = [k for k, r in enumerate(rows) if not r["pass"]]
    print(f"wrote {path}")
    if failing:
        first = rows[failing[0]]
        # data rows start after the provenance line and the header
        _err(f"{len(failing)} violation(s); first at {path}:{failing[0] + 3} "
             f"({first['suite']} {first['case']})")
        return 1
    return 0


# ---------------------------------------------------------------- band-sweep


def make_periodic_W(w_cfg: dict, cell):
    kind = w_cfg["kind"]
    if kind == "constant":
        value = float(w_cfg.get("value", 0.0))
        return lambda x: np.full(len(np.atleast_2d(x)), value)
    if kind == "cosine":
        A = float(w_cfg.get("amplitude", 0.3))
        return lambda x: A * (2 + np.cos(2 * np.pi * x[:, 0] / cell.g1) + np.cos(2 * np.pi * x[:, 1] / cell.g2))
    if kind == "bumps":
        A = float(w_cfg.get("amplitude", 0.5))
        w = float(w_cfg.get("width", 0.3))
        period = np.array([cell.g1, cell.g2])

        def W(x):
            y = np.asarray(x, dtype=float)
            y = y - period * np.round(y / period)
            total = np.zeros(len(y))
            for m in (-1, 0, 1):
                for n in (-1, 0, 1):
                    d = y - period * np.array([m, n])
                    total += np.exp(-(d**2).sum(axis=1) / w**2)
            return A * total

        return W
    raise ConfigError(f"band/W/kind: unknown kind {kind!r}")


def cmd_band_sweep(args) -> int:
    if not args.config:
        raise UsageError("band-sweep needs --config PATH")
    cfg = validate_band(load_toml(args.config))
    band = cfg["band"]
    cell = rational_flux_cell(band["p"], band["r"])
    W = make_periodic_W(band["W"], cell)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sweep = band_sweep(W, band["p"], band["r"], theta_per_side=band["theta_per_side"],
                           q_max=band["q_max"], band_tol=band.get("band_tol"))
    out = _out_dir(args, cfg)
    prov = provenance({k: v for k, v in cfg.items() if k != "output"})
    rows = []
    for j in range(len(sweep.band_min)):
        classifiable = bool(sweep.simple_lower[j] and sweep.simple_upper[j])
        rows.append({
            "band": j, "min": float(sweep.band_min[j]), "max": float(sweep.band_max[j]),
            "width": float(sweep.band_max[j] - sweep.band_min[j]),
            "constant": not bool(sweep.nonconstant[j]),
            "simple_lower": bool(sweep.simple_lower[j]), "simple_upper": bool(sweep.simple_upper[j]),
            "trusted": bool(sweep.trusted[j]),
            "classifiable": classifiable and bool(sweep.trusted[j]),
        })
    path = out / "bands.csv"
    bounds.write_rows_csv(path, rows, [provenance_line(prov),
                                       f"flux b/2pi = {band['p']}/{band['r']}, cell {cell.g1:g} x {cell.g2:g}"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    flagged = [r["band"] for r in rows if r["trusted"] and not r["classifiable"]]
    if flagged:
        print(f"unclassifiable (overlapping) bands: {flagged}")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- entry point


def cmd_print_schema(args) -> int:
    print(json.dumps({"run": SCHEMA, "band-sweep": BAND_SCHEMA}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landau-ids", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")

    sp = sub.add_parser("run-ids", help="Monte Carlo reduced IDS curve")
    common(sp)
    sp.add_argument("--seed", type=int, help="override disorder.seed")
    sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    sp.set_defaults(func=cmd_run_ids)

    sp = sub.add_parser("fit-lifshitz", help="iterated-log regression of an IDS curve")
    sp.add_argument("curve", help="ids_curve.csv")
    sp.add_argument("--meta", help="sidecar meta.json (default: next to the curve)")
    sp.add_argument("--family", choices=["powerlaw", "exponential", "supergaussian", "indicator"])
    sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="e.g. varkappa=4, beta=2, delta=0.25")
    sp.add_argument("--b", type=float, help="field strength when no meta.json is available")
    sp.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), help="E/2b range")
    sp.add_argument("--min-points", type=int, default=6)
    common(sp, config=False)
    sp.set_defaults(func=cmd_fit_lifshitz)

    sp = sub.add_parser("verify-bounds", help="inequality probes with a pass/fail table")
    sp.add_argument("selector", choices=SELECTORS + ("all",))
    common(sp, config=False)
    sp.set_defaults(func=cmd_verify_bounds)

    sp = sub.add_parser("band-sweep", help="Floquet bands for a periodic potential at rational flux")
    common(sp)
    sp.set_defaults(func=cmd_band_sweep)

    sp = sub.add_parser("print-schema", help="print the configuration JSON schemas")
    sp.set_defaults(func=cmd_print_schema)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        _err(str(exc))
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
