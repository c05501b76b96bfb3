"""Command-line entry point.

Subcommands: rho, rh-check, maximal, ap, bmo, czd, factorize, rdf, budget,
verify <suite>, report.  Configuration is a flat JSON file whose keys mirror
the flag names; flags override file values.  Every artifact embeds the fully
resolved configuration.  Exit codes: 0 success, 1 usage/validation error,
2 assertion failure in a verification suite.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .construct import factorize, rdf_majorant
from .czd import decompose
from .grid import GridFunction, GridSpec, read_gfd, side_ladder, write_gfd
from .maximal import MaximalConfig, maximal
from .potential import Potential, check_reverse_holder, critical_radius_field
from .suites import SUITE_NAMES, build_context, run_suites
from .verify import measure_operator_norm
from .weights import Weight, ap_constant, bmo_norm, exponent_budget

SUITE_VERSION = "swlab-suites-1"


@dataclass
class RunConfig:
    n: int = 2
    N: int = 64
    L: float = 2.0
    potential: str = "one"
    weight: str = "one"
    p: float = 2.0
    q: float = 2.0
    r: float = 2.0
    theta: float = 1.0
    delta: float = 0.5
    eta: float | None = None
    l0: float = 1.0
    lam: float | None = None
    input: str | None = None
    variant: str = "cube"
    k_terms: int = 40
    tol: float = 1e-9
    stride: int = 4
    seed: int = 0
    out: str = "artifacts"
    csv: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FLOAT_FIELDS = {"L", "p", "q", "r", "theta", "delta", "eta", "l0", "lam", "tol"}
_INT_FIELDS = {"n", "N", "k_terms", "stride", "seed"}
_STR_FIELDS = {"potential", "weight", "input", "variant", "out"}
_BOOL_FIELDS = {"csv"}


class ConfigError(ValueError):
    pass


def load_config(path: str | Path) -> RunConfig:
    """Read a flat JSON config; unknown or ill-typed keys fail with the
    field name in the message."""
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config parse error: {e}")
    if raw is None or raw == {}:
        return RunConfig()
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = RunConfig()
    return merge_config(cfg, raw)


def merge_config(cfg: RunConfig, updates: dict) -> RunConfig:
    values = cfg.to_dict()
    for key, val in updates.items():
        if val is None:
            continue
        if key not in values:
            raise ConfigError(f"unknown config field {key!r}")
        try:
            if key in _FLOAT_FIELDS:
                val = float(val)
            elif key in _INT_FIELDS:
                val = int(val)
            elif key in _BOOL_FIELDS:
                val = bool(val)
            elif key in _STR_FIELDS and val is not None:
                val = str(val)
        except (TypeError, ValueError):
            raise ConfigError(f"field {key!r}: cannot coerce {val!r}")
        values[key] = val
    return RunConfig(**values)


def _validate(cfg: RunConfig, command: str):
    if cfg.n < 1:
        raise ConfigError(f"field 'n': dimension must be >= 1, got {cfg.n}")
    if cfg.N < 4 or cfg.N % 2:
        raise ConfigError(f"field 'N': must be an even integer >= 4, got {cfg.N}")
    if cfg.L <= 0:
        raise ConfigError(f"field 'L': must be positive, got {cfg.L}")
    if cfg.theta < 0:
        raise ConfigError(f"field 'theta': must be nonnegative, got {cfg.theta}")
    if command == "ap" and cfg.p < 1:
        raise ConfigError(f"field 'p': A_p constants need p >= 1, got {cfg.p}")
    if command == "rh-check" and not cfg.q > 1:
        raise ConfigError(f"field 'q': reverse Hölder needs q > 1, got {cfg.q}")
    if command == "factorize" and not cfg.p > 1:
        raise ConfigError(f"field 'p': factorization needs p > 1, got {cfg.p}")
    if command == "budget":
        if not cfg.l0 > 0:
            raise ConfigError(f"field 'l0': must be positive, got {cfg.l0}")
        if not cfg.r > 1:
            raise ConfigError(f"field 'r': must exceed 1, got {cfg.r}")
        if cfg.p < 1:
            raise ConfigError(f"field 'p': must be >= 1, got {cfg.p}")
    if command == "czd" and cfg.lam is not None and cfg.lam <= 0:
        raise ConfigError(f"field 'lam': must be positive, got {cfg.lam}")


def _spec(cfg: RunConfig) -> GridSpec:
    return GridSpec(cfg.n, cfg.L, cfg.N)


def _potential(cfg: RunConfig, spec: GridSpec) -> Potential:
    tag = cfg.potential
    if tag == "one":
        return Potential.one(spec)
    if tag == "xsq":
        return Potential.square_norm(spec)
    gf = read_gfd(tag)
    if gf.spec != spec:
        raise ConfigError(f"field 'potential': GFD grid {gf.spec} differs from config grid")
    return Potential.from_samples(gf)


def _weight(cfg: RunConfig, spec: GridSpec) -> Weight:
    sel = cfg.weight
    if sel == "one":
        return Weight.constant(spec)
    if sel.startswith("decay:"):
        gamma = float(sel.split(":", 1)[1])
        return Weight.from_field(spec, (1.0 + spec.radius_field()) ** (-(spec.n + gamma)))
    if sel.startswith("power:"):
        a = float(sel.split(":", 1)[1])
        return Weight.from_field(spec, (1.0 + spec.radius_field()) ** a)
    gf = read_gfd(sel)
    if gf.spec != spec:
        raise ConfigError(f"field 'weight': GFD grid differs from config grid")
    return Weight(gf)


def _input_function(cfg: RunConfig, spec: GridSpec) -> GridFunction:
    if cfg.input is None:
        raise ConfigError("field 'input': a GFD input file is required for this command")
    gf = read_gfd(cfg.input)
    if gf.spec != spec:
        raise ConfigError("field 'input': GFD grid differs from config grid")
    return gf


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict, cfg: RunConfig):
    payload = dict(payload)
    payload["config"] = cfg.to_dict()
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=True) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------


def cmd_budget(cfg: RunConfig) -> int:
    b = exponent_budget(cfg.l0, cfg.theta, cfg.p, cfg.r, cfg.n)
    out = _outdir(cfg)
    _write_json(out / "budget.json", b.to_dict(), cfg)
    print(
        f"budget: p0={b.p0:g} theta0={b.theta0:g} eta={b.eta:g} "
        f"eta_bar={b.eta_bar:g} eta3={b.eta3:g} eta1={b.eta1:g}"
    )
    return 0


def cmd_rho(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    V = _potential(cfg, spec)
    field = critical_radius_field(V)
    out = _outdir(cfg)
    meta = {
        "radii_ladder": list(field.radii_ladder),
        "tolerance": field.tolerance,
        "clamped_fraction": field.clamped_fraction,
        "config": cfg.to_dict(),
    }
    write_gfd(out / "rho.gfd", field.rho, meta=meta)
    _write_json(
        out / "rho_meta.json",
        {
            "clamped_fraction": field.clamped_fraction,
            "floored_cells": int(field.floored.sum()),
            "rho_min": float(field.rho.samples.min()),
            "rho_max": float(field.rho.samples.max()),
        },
        cfg,
    )
    print(
        f"rho: potential={cfg.potential} n={cfg.n} N={cfg.N} "
        f"min={field.rho.samples.min():.6g} max={field.rho.samples.max():.6g} "
        f"clamped={100 * field.clamped_fraction:.2f}% -> {out / 'rho.gfd'}"
    )
    return 0


def cmd_rh_check(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    V = _potential(cfg, spec)
    rep = check_reverse_holder(V, cfg.q)
    out = _outdir(cfg)
    _write_json(out / "rh_check.json", rep.to_dict(), cfg)
    print(f"rh-check: potential={cfg.potential} q={cfg.q:g} constant={rep.constant:.6g}")
    return 0


def cmd_maximal(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    f = _input_function(cfg, spec)
    exponent = cfg.eta if cfg.eta is not None else cfg.theta
    if cfg.variant == "phi":
        mcfg = MaximalConfig.phi(exponent)
    else:
        V = _potential(cfg, spec)
        rho = critical_radius_field(V)
        if cfg.variant == "cube":
            mcfg = MaximalConfig.cube(rho, exponent)
        elif cfg.variant == "dyadic":
            mcfg = MaximalConfig.dyadic(rho, exponent)
        elif cfg.variant == "centered":
            mcfg = MaximalConfig.centered(rho, exponent)
        else:
            raise ConfigError(f"field 'variant': unknown maximal variant {cfg.variant!r}")
    result = maximal(f, mcfg)
    out = _outdir(cfg)
    write_gfd(out / "maximal.gfd", result, meta={"config": cfg.to_dict()})
    print(
        f"maximal: variant={cfg.variant} exponent={exponent:g} "
        f"max={result.samples.max():.6g} -> {out / 'maximal.gfd'}"
    )
    return 0


def cmd_ap(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    V = _potential(cfg, spec)
    rho = critical_radius_field(V)
    w = _weight(cfg, spec)
    rep = ap_constant(w, cfg.p, cfg.theta, rho)
    out = _outdir(cfg)
    _write_json(out / "ap.json", rep.to_dict(), cfg)
    wc = rep.worst_cube
    print(
        f"ap: weight={cfg.weight} p={cfg.p:g} theta={cfg.theta:g} "
        f"constant={rep.constant:.6g} worst_cube(center={wc.get('center')}, side={wc.get('side')})"
    )
    return 0


def cmd_bmo(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    f = _input_function(cfg, spec)
    V = _potential(cfg, spec)
    rho = critical_radius_field(V)
    value = bmo_norm(f, cfg.theta, rho)
    out = _outdir(cfg)
    _write_json(out / "bmo.json", {"bmo_norm": value, "theta": cfg.theta}, cfg)
    print(f"bmo: theta={cfg.theta:g} norm={value:.6g}")
    return 0


def cmd_czd(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    f = _input_function(cfg, spec)
    if cfg.lam is None:
        raise ConfigError("field 'lam': a decomposition level is required")
    V = _potential(cfg, spec)
    rho = critical_radius_field(V)
    d = decompose(f, cfg.lam, cfg.theta, rho)
    out = _outdir(cfg)
    rows = d.cube_list_rows()
    _write_json(out / "czd.json", {"lam": d.lam, "theta": d.theta, "cubes": rows}, cfg)
    write_gfd(
        out / "czd_mask.gfd",
        GridFunction.from_field(spec, d.omega_mask.astype(float)),
        meta={"config": cfg.to_dict()},
    )
    if cfg.csv:
        with (out / "czd_cubes.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "side", "psi", "psi_average"] + [f"center_{i}" for i in range(spec.n)])
            for row in rows:
                writer.writerow([row["level"], row["side"], row["psi"], row["psi_average"], *row["center"]])
    print(f"czd: lam={cfg.lam:g} theta={cfg.theta:g} cubes={len(rows)} -> {out / 'czd.json'}")
    return 0


def cmd_factorize(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    V = _potential(cfg, spec)
    rho = critical_radius_field(V)
    w = _weight(cfg, spec)
    fact = factorize(w, cfg.p, cfg.theta, rho, K=cfg.k_terms, tol=cfg.tol)
    out = _outdir(cfg)
    _write_json(out / "factorization.json", fact.to_dict(), cfg)
    write_gfd(out / "factor_w1.gfd", fact.w1.values, meta={"config": cfg.to_dict()})
    write_gfd(out / "factor_w2.gfd", fact.w2.values, meta={"config": cfg.to_dict()})
    print(
        f"factorize: weight={cfg.weight} p={cfg.p:g} branch={fact.branch} "
        f"identity_err={fact.product_rel_error:.3e} a1=({fact.a1_constant_w1:.4g}, {fact.a1_constant_w2:.4g})"
    )
    return 0


def cmd_rdf(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    h = _input_function(cfg, spec)
    V = _potential(cfg, spec)
    rho = critical_radius_field(V)
    w = _weight(cfg, spec)
    exponent = cfg.eta if cfg.eta is not None else 2.0 * cfg.theta
    mcfg = MaximalConfig.cube(rho, exponent)
    a_rep = measure_operator_norm(lambda g: maximal(g, mcfg), cfg.p, w, [h])
    res = rdf_majorant(h, mcfg, A=a_rep.ratio, p=cfg.p, weight=w, K=cfg.k_terms, tol=cfg.tol)
    out = _outdir(cfg)
    _write_json(out / "rdf.json", res.to_dict(), cfg)
    write_gfd(out / "rdf_majorant.gfd", res.majorant, meta={"config": cfg.to_dict()})
    c = res.certified
    print(
        f"rdf: A={res.operator_norm_A:.6g} K={res.truncation_K} "
        f"domination_min={c['pointwise_domination']:.3e} doubling={c['norm_doubling']:.6g} "
        f"self_major={c['a1_factor']:.6g} (bound {c['a1_bound']:.6g})"
    )
    return 0


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    names = SUITE_NAMES if suite == "all" else (suite,)
    for name in names:
        if name not in SUITE_NAMES:
            print(f"error: unknown suite {name!r}; choose from {', '.join(SUITE_NAMES)} or 'all'", file=sys.stderr)
            return 1
    spec = _spec(cfg)
    ctx = build_context(spec, cfg.potential, cfg.theta, cfg.seed)
    reports = run_suites(names, ctx)
    out = _outdir(cfg)
    payload = {
        "suite_version": SUITE_VERSION,
        "suites": list(names),
        "seed": cfg.seed,
        "regularity": ctx.regularity.to_dict(),
        "reports": [r.to_dict() for r in reports],
    }
    path = out / ("regression.json" if suite == "all" else f"regression_{suite}.json")
    _write_json(path, payload, cfg)
    failed = [r for r in reports if not r.passed]
    print(
        f"verify {suite}: {len(reports)} reports, {len(failed)} failed -> {path}"
    )
    for r in failed:
        print(f"  FAIL {r.name}: ratio={r.ratio:.6g} ceiling={r.ceiling}")
    return 2 if failed else 0


def cmd_report(cfg: RunConfig, directory: str | None) -> int:
    src = Path(directory or cfg.out)
    if not src.is_dir():
        print(f"error: field 'out': {src} is not a directory", file=sys.stderr)
        return 1
    merged = {"suite_version": SUITE_VERSION, "artifacts": {}}
    for path in sorted(src.glob("*.json")):
        if path.name == "report.json":
            continue
        try:
            merged["artifacts"][path.name] = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError:
            print(f"warning: skipping unparseable artifact {path}", file=sys.stderr)
    out_path = src / "report.json"
    out_path.write_text(json.dumps(merged, sort_keys=True, indent=2, allow_nan=True) + "\n", "utf-8")
    print(f"report: merged {len(merged['artifacts'])} artifacts -> {out_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--n", type=int, help="dimension (default 2)")
    parser.add_argument("--N", type=int, help="cells per axis (default 64)")
    parser.add_argument("--L", type=float, help="box half-width (default 2)")
    parser.add_argument("--potential", help="one | xsq | path to GFD (default one)")
    parser.add_argument("--weight", help="one | decay:G | power:A | path to GFD")
    parser.add_argument("--p", type=float, help="Lebesgue exponent (default 2)")
    parser.add_argument("--q", type=float, help="secondary exponent (default 2)")
    parser.add_argument("--r", type=float, help="vector aggregation exponent (default 2)")
    parser.add_argument("--theta", type=float, help="penalization exponent (default 1)")
    parser.add_argument("--delta", type=float, help="power exponent in (0,1] (default 0.5)")
    parser.add_argument("--eta", type=float, help="maximal exponent override")
    parser.add_argument("--l0", type=float, help="regularity growth exponent (default 1)")
    parser.add_argument("--lam", type=float, help="decomposition level")
    parser.add_argument("--input", help="input GFD file")
    parser.add_argument("--variant", help="maximal variant: cube|dyadic|centered|phi")
    parser.add_argument("--k-terms", dest="k_terms", type=int, help="series truncation (default 40)")
    parser.add_argument("--tol", type=float, help="series tolerance (default 1e-9)")
    parser.add_argument("--stride", type=int, help="cube family center stride (default 4)")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--out", help="artifact directory (default artifacts)")
    parser.add_argument("--csv", action="store_const", const=True, help="also emit CSV where supported")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swlab",
        description="Grid laboratory for Schrödinger-adapted weights and maximal operators",
    )
    sub = parser.add_subparsers(dest="command")
    for name in ("rho", "rh-check", "maximal", "ap", "bmo", "czd", "factorize", "rdf", "budget"):
        _add_common(sub.add_parser(name))
    verify_p = sub.add_parser("verify")
    verify_p.add_argument("suite", nargs="?", default="all")
    _add_common(verify_p)
    report_p = sub.add_parser("report")
    report_p.add_argument("--dir", help="artifact directory to aggregate")
    _add_common(report_p)
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "suite", "dir") and v is not None
    }
    return merge_config(cfg, overrides)


_HANDLERS = {
    "budget": cmd_budget,
    "rho": cmd_rho,
    "rh-check": cmd_rh_check,
    "maximal": cmd_maximal,
    "ap": cmd_ap,
    "bmo": cmd_bmo,
    "czd": cmd_czd,
    "factorize": cmd_factorize,
    "rdf": cmd_rdf,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = _resolve_config(args)
        _validate(cfg, args.command)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        if args.command == "report":
            return cmd_report(cfg, args.dir)
        return _HANDLERS[args.command](cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
