"""Command-line entry point: subcommands over StudyConfig.

Config files are flat ``key = value`` text mirroring the StudyConfig
fields plus the calibration constants; unknown keys are rejected and the
config hash is embedded in every output.  Exit codes: 0 success, 2
assertion failure (a study's stated check failed), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments
from .bony import redistribute
from .calderon import TimeGrid
from .experiments import StudyConfig
from .geometry import make_geometry
from .noise import archive_read, archive_write, enhance
from .util import n_workers

_CONFIG_TYPES = {
    "geometry": str,
    "N": int,
    "b": int,
    "n_t": int,
    "alpha": float,
    "eps_list": lambda s: tuple(float(x) for x in s.split(",")),
    "seeds": lambda s: tuple(int(x) for x in s.split(",")),
    "delta": float,
    "s_policy": float,
    "k_const": float,
    "m_const": float,
    "workers": int,
    "out_dir": str,
}


def load_config(path: str | None, overrides: dict) -> StudyConfig:
    values: dict = {}
    if path:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _CONFIG_TYPES[key](val)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    return StudyConfig(**values)


def _write_json(report: dict, out_dir: str, name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2, allow_nan=True))
    return path


def _write_csv(rows: list[dict], out_dir: str, name: str) -> Path | None:
    if not rows:
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=sorted(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path


def _summary(name: str, ok: bool, detail: str) -> int:
    print(f"[{name}] {'PASS' if ok else 'FAIL'}  {detail}")
    return 0 if ok else 2


# --- subcommands ------------------------------------------------------------------


def cmd_sample(cfg: StudyConfig, args) -> int:
    geom = cfg.geometry_handle()
    grid = cfg.grid(geom)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        noise = enhance(geom, seed, cfg.eps_list[0], grid, cfg.alpha, cfg.b)
        path = out / f"noise_{cfg.geometry}_N{cfg.N}_seed{seed}.hpara"
        archive_write(noise, path)
        print(f"[sample] seed {seed}: x = {noise.x:.3f} -> {path}")
    return 0


def cmd_renorm(cfg: StudyConfig, args) -> int:
    report = experiments.renorm_study(cfg, mc_samples=args.mc_samples)
    _write_json(report, cfg.out_dir, "renorm")
    rows = [{"eps": e, "wick_mass": w} for e, w in
            zip(report["eps_list"], report["wick_mass_engine"])]
    _write_csv(rows, cfg.out_dir, "renorm")
    dev = abs(report["slope_plain"] - report["target_slope"]) / report["target_slope"]
    return _summary("renorm", dev < 0.05 and report["oracle_max_rel_dev"] < 0.01,
                    f"plain slope {report['slope_plain']:.5f} (dev {dev:.1%}), "
                    f"engine-vs-oracle {report['oracle_max_rel_dev']:.2e}")


def cmd_spectrum(cfg: StudyConfig, args) -> int:
    geom = cfg.geometry_handle()
    grid = cfg.grid(geom)
    if args.archive:
        noise = archive_read(args.archive)
    else:
        amp = 0.0 if args.zero_noise else 1.0
        noise = enhance(geom, cfg.seeds[0], cfg.eps_list[0], grid, cfg.alpha,
                        cfg.b, amplitude=amp, depth="potential")
    spec = experiments.spectrum(noise, args.n_eigs, method=args.method)
    spec.calibration = {"k": cfg.k_const, "m": cfg.m_const}
    _write_json(spec.to_dict(), cfg.out_dir, "spectrum")
    vals = ", ".join(f"{v:.6g}" for v in spec.eigenvalues[: min(10, args.n_eigs)])
    print(f"[spectrum] {vals}")
    return 0


def cmd_weyl(cfg: StudyConfig, args) -> int:
    report = experiments.weyl_study(cfg, zero_noise=args.zero_noise)
    _write_json(report, cfg.out_dir, "weyl")
    lam_grid = np.linspace(*report["window"], 50)
    _write_csv([{"lam": float(l)} for l in lam_grid], cfg.out_dir, "weyl_window")
    tol = 0.05 if args.zero_noise else 0.10
    ok = report["rel_deviation"] < tol
    return _summary("weyl", ok,
                    f"slope {report['pooled_slope']:.4f} vs {report['target_slope']:.4f} "
                    f"(dev {report['rel_deviation']:.2%})")


def cmd_bounds(cfg: StudyConfig, args) -> int:
    report = experiments.eigenvalue_bounds_study(cfg)
    _write_json(report, cfg.out_dir, "bounds")
    rows = [{k: r[k] for k in ("seed", "amplitude", "x", "C_lower", "C_upper", "violations")}
            for r in report["rows"]]
    _write_csv(rows, cfg.out_dir, "bounds")
    return _summary("bounds", report["violations"] == 0,
                    f"{report['violations']} violations, k = {report['calibration']['k']:.3g}")


def cmd_tails(cfg: StudyConfig, args) -> int:
    report = experiments.tail_study(cfg, samples=args.samples)
    _write_json(report, cfg.out_dir, "tails")
    rows = [{"lam": l, "cdf": c} for l, c in zip(report["lam_grid"], report["cdf"])]
    _write_csv(rows, cfg.out_dir, "tails")
    cdf = np.array(report["cdf"])
    return _summary("tails", bool(np.all(np.diff(cdf) >= 0)),
                    f"median {report['median']:.3f} "
                    f"(Laplacian {report['lam_laplacian']:.3f})")


def cmd_resolvent(cfg: StudyConfig, args) -> int:
    report = experiments.resolvent_convergence_study(cfg)
    _write_json(report, cfg.out_dir, "resolvent")
    ok = abs(report["gap_slope"] - 1.0) <= 0.3
    return _summary("resolvent", ok, f"gap slope {report['gap_slope']:.3f}")


def cmd_bg(cfg: StudyConfig, args) -> int:
    report = experiments.brezis_gallouet_study(cfg)
    _write_json(report, cfg.out_dir, "brezis_gallouet")
    return _summary("bg", report["max_growth"] < 1.05,
                    f"max growth/doubling {report['max_growth']:.3f}")


def cmd_nls(cfg: StudyConfig, args) -> int:
    report = experiments.nls_study(cfg, T=args.T, dt=args.dt)
    _write_json(report, cfg.out_dir, "nls")
    return _summary("nls", report["cauchy_decreasing"],
                    f"distances {['%.2e' % d for d in report['mean_distances']]}")


def cmd_opnorms(cfg: StudyConfig, args) -> int:
    from .correctors import scaling_probe

    geom = cfg.geometry_handle()
    grid = cfg.grid(geom)
    noise = enhance(geom, cfg.seeds[0], cfg.eps_list[0], grid, cfg.alpha, cfg.b)
    scales = [2.0 ** (-k) for k in range(2, 6)]
    reports = {
        "para_truncated": scaling_probe("para_truncated", scales, geom=geom,
                                        x_field=noise.X1, grid=grid, b=cfg.b).to_dict(),
        "para_tail": scaling_probe("para_tail", scales, geom=geom,
                                   x_field=noise.X1, grid=grid, b=cfg.b).to_dict(),
    }
    _write_json(cfg.stamp({"study": "opnorms", "reports": reports}), cfg.out_dir, "opnorms")
    e1 = reports["para_truncated"]["exponent"]
    e2 = reports["para_tail"]["exponent"]
    ok = e1 >= cfg.alpha / 4 - 0.1
    return _summary("opnorms", ok, f"truncated exp {e1:.3f}, tail exp {e2:.3f}")


def cmd_decomp_dump(cfg: StudyConfig, args) -> int:
    d = redistribute(cfg.b)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"decomposition_b{cfg.b}.json"
    path.write_text(d.to_json())
    print(f"[decomp-dump] {d.n_terms} terms -> {path}")
    return 0


def cmd_selftest(cfg: StudyConfig, args) -> int:
    """Trivial-tier invariants at N = 32, budgeted under a minute."""
    from . import selftest

    t0 = time.time()
    failures = selftest.run(n=min(cfg.N, 32), n_t=min(cfg.n_t, 128))
    dt = time.time() - t0
    print(f"[selftest] {'PASS' if not failures else 'FAIL'} ({dt:.1f}s)")
    return 0 if not failures else 2


_SUBCOMMANDS = {
    "sample": cmd_sample,
    "renorm": cmd_renorm,
    "spectrum": cmd_spectrum,
    "weyl": cmd_weyl,
    "bounds": cmd_bounds,
    "tails": cmd_tails,
    "resolvent": cmd_resolvent,
    "bg": cmd_bg,
    "nls": cmd_nls,
    "opnorms": cmd_opnorms,
    "decomp-dump": cmd_decomp_dump,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatpara",
                                description="heat-semigroup paracontrolled calculus studies")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--geometry", choices=["torus", "dirichlet-square"])
    p.add_argument("--N", type=int)
    p.add_argument("--b", type=int)
    p.add_argument("--nt", type=int, dest="n_t")
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", dest="eps_list",
                   type=lambda s: tuple(float(x) for x in s.split(",")))
    p.add_argument("--seeds", type=lambda s: tuple(int(x) for x in s.split(",")))
    p.add_argument("--delta", type=float)
    p.add_argument("--s", type=float, dest="s_policy")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--workers", type=int)
    sub = p.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        sp = sub.add_parser(name)
        if name == "spectrum":
            sp.add_argument("--zero-noise", action="store_true")
            sp.add_argument("--method", choices=["dense", "lanczos"], default="dense")
            sp.add_argument("--n-eigs", type=int, default=10)
            sp.add_argument("--archive", help="read a noise archive instead of sampling")
        if name == "renorm":
            sp.add_argument("--mc-samples", type=int, default=0)
        if name == "weyl":
            sp.add_argument("--zero-noise", action="store_true")
        if name == "tails":
            sp.add_argument("--samples", type=int, default=500)
        if name == "nls":
            sp.add_argument("--T", type=float, default=1.0)
            sp.add_argument("--dt", type=float, default=0.002)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    overrides = {k: getattr(args, k, None) for k in _CONFIG_TYPES}
    try:
        cfg = load_config(args.config, overrides)
        cfg = dataclasses.replace(cfg, workers=n_workers(cfg.workers))
        return _SUBCOMMANDS[args.command](cfg, args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
