"""Command-line front end.

Subcommands: ``build``, ``verify``, ``scan``, ``norms``, ``hessian-integral``, ``eval``.
Exit codes are 0 on success, 1 when a verification fails or a computation
raises, and 2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .diagnostics import (
    CheckResult,
    bounds_check,
    decomposition_check,
    divergence_check,
    divergence_points,
    finite_difference_check,
    geometry_checks,
    sandwich_check,
    smooth_sample,
    sobolev_partial_norms,
    weighted_hessian_integral,
)
from .errors import ApblowError, DomainError
from .field import FieldConfig, eval_field_jet, sym_gradient
from .geometry import BallSystem, Domain, RegionParams, build_ball_system, calibrate_epsilon
from .io import atomic_write_text, write_csv, write_json
from .muckenhoupt import SCAN_COLUMNS, NotYetPositive, WeightParams, ap_scan
from .sampling import SCHEMES, QuadratureSpec

log = logging.getLogger("apblow")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SUITES = ("geometry", "bounds", "decomposition", "sandwich", "fd", "divergence")


@dataclass
class RunConfig:
    """All knobs of a run. ``epsilon`` and ``c_w`` accept ``"auto"``."""

    n: int = 2
    rho: float = 0.49
    count: int = 1000
    epsilon: float | str = "auto"
    c_w: float | str = "auto"
    p: float = 3.0
    alpha: float = 2.0
    scheme: str = "low-discrepancy"
    samples: int = 1 << 14
    seed: int = 0
    l_min: int = 8
    l_max: int = 512
    l_step: int = 0
    subdomain: tuple | None = None
    allow_trivial: bool = False
    out: str = "."

    def validate(self) -> "RunConfig":
        Domain(self.n)
        if not 0.0 < self.rho < 0.5:
            raise DomainError(f"rho must lie in (0, 1/2), got {self.rho}")
        if self.count < 1:
            raise DomainError("count must be positive")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}")
        if self.samples < 2:
            raise DomainError("at least two samples are needed")
        if self.epsilon != "auto" and not 0.0 < float(self.epsilon) < 0.5:
            raise DomainError("epsilon must lie in (0, 1/2)")
        if self.c_w != "auto" and not float(self.c_w) > 0.0:
            raise DomainError("c_w must be positive")
        if not 1 <= self.l_min <= self.l_max:
            raise DomainError("need 1 <= l_min <= l_max")
        if self.subdomain is not None:
            if len(self.subdomain) != self.n + 1 or not self.subdomain[-1] > 0:
                raise DomainError("subdomain is c_1,...,c_n,radius with radius > 0")
        return self

    @property
    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(self.scheme, int(self.samples), int(self.seed))

    def l_values(self) -> list[int]:
        if self.l_step > 0:
            return list(range(self.l_min, self.l_max + 1, self.l_step))
        # powers of two from l_min
        out, l = [], self.l_min
        while l <= self.l_max:
            out.append(l)
            l *= 2
        return out

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        doc = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        if doc.get("subdomain") is not None:
            doc["subdomain"] = tuple(doc["subdomain"])
        return cls(**doc)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common(sp, system=True):
    sp.add_argument("--config", help="JSON RunConfig; explicit flags override it")
    if system:
        sp.add_argument("--system", required=True, help="ball system JSON written by 'build'")
    sp.add_argument("--out", help="output directory (file for 'build')")
    sp.add_argument("--samples", type=int, help="samples per ball")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scheme", choices=SCHEMES)
    sp.add_argument("--epsilon", help="region parameter or 'auto'")
    sp.add_argument("--c-w", dest="c_w", help="lift amplitude or 'auto'")
    sp.add_argument("--truncation", type=int, help="use only the first L balls")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apblow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="construct a ball system")
    _common(b, system=False)
    b.add_argument("--n", type=int)
    b.add_argument("--rho", type=float)
    b.add_argument("--count", type=int)

    v = sub.add_parser("verify", help="run the verification suites")
    _common(v)
    v.add_argument("--only", action="append", choices=SUITES, help="run only this suite (repeatable)")

    s = sub.add_parser("scan", help="A_alpha ratios over E_l")
    _common(s)
    s.add_argument("--p", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--l-min", dest="l_min", type=int)
    s.add_argument("--l-max", dest="l_max", type=int)
    s.add_argument("--l-step", dest="l_step", type=int, help="linear step; default doubles l")
    s.add_argument("--subdomain", type=_floats, help="c_1,...,c_n,radius")
    s.add_argument("--allow-trivial", dest="allow_trivial", action="store_true", default=None)

    nm = sub.add_parser("norms", help="per-bump Sobolev norm series")
    _common(nm)
    nm.add_argument("--mode", choices=("grad", "hess"), default="grad")
    nm.add_argument("--exponent", type=float, default=2.0)

    r = sub.add_parser("hessian-integral", help="weighted Hessian integrals over truncations")
    _common(r)
    r.add_argument("--p", type=float)
    r.add_argument("--truncations", type=_ints, default=(25, 50, 100))

    e = sub.add_parser("eval", help="field jet at points")
    _common(e)
    e.add_argument("--point", type=_floats, action="append", required=True)
    e.add_argument("--order", type=int, choices=(0, 1, 2), default=2)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            updates[f.name] = val
    for key in ("epsilon", "c_w"):
        if key in updates and updates[key] != "auto":
            try:
                updates[key] = float(updates[key])
            except ValueError as exc:
                raise DomainError(f"{key} must be a number or 'auto'") from exc
    return replace(cfg, **updates).validate()


def _load(args, cfg: RunConfig):
    system = BallSystem.load(args.system)
    cfg = replace(cfg, n=system.n, rho=system.rho, count=len(system))
    truncation = getattr(args, "truncation", None)
    config = FieldConfig.create(system, truncation, cfg.c_w)
    return system, config, cfg


def _region_params(cfg: RunConfig, system: BallSystem) -> RegionParams:
    if cfg.epsilon == "auto":
        return calibrate_epsilon(system.domain, cfg.quadrature)
    return RegionParams(float(cfg.epsilon))


# ---------------------------------------------------------------- commands


def cmd_build(args, cfg: RunConfig) -> int:
    out = Path(args.out or "system.json")
    records: list = []
    system = build_ball_system(Domain(cfg.n), cfg.rho, cfg.count, log=records)
    system.save(out)
    write_csv(out.with_suffix(".log.csv"), records, ["k", "dense_index", "branch", "clearance"])
    log.info("wrote %d balls to %s", len(system), out)
    return EXIT_OK


def run_suites(config: FieldConfig, params: RegionParams, quadrature: QuadratureSpec,
               only=None) -> list[CheckResult]:
    """The verification bundle behind ``verify``."""
    system = config.system
    L = config.truncation
    chosen = set(only or SUITES)
    results: list[CheckResult] = []
    if "geometry" in chosen:
        results += geometry_checks(system)
    if "bounds" in chosen:
        for k in (1, 5, 25, 125):
            if k <= L:
                rep = bounds_check(config, k, quadrature)
                ok = rep.worst <= 1.0 + 1e-12 and rep.outside_max == 0.0
                results.append(CheckResult(f"bounds k={k}", ok, rep.n_samples, 0 if ok else 1, rep.worst))
    if "decomposition" in chosen:
        for l in (1, 8, 27, 125):
            if l <= L:
                results.append(decomposition_check(config, params, l, quadrature))
    if "sandwich" in chosen:
        for l in (10, 100):
            if 2 * l <= L:
                results += sandwich_check(config, params, l, quadrature)
    if "fd" in chosen:
        for a in (0, 1, 5, 25):
            if a <= L:
                pts = smooth_sample(config, a, 250, quadrature)
                rep = finite_difference_check(config, pts)
                results.append(CheckResult(f"finite differences anchor={a}", rep.passed, rep.n_points,
                                           rep.n_failed, rep.worst_deviation, detail=f"floor={rep.n_floor}"))
    if "divergence" in chosen:
        anchors = [a for a in (1, 50, 500) if a <= L]
        results.append(divergence_check(config, divergence_points(config, quadrature, anchors)))
    return results


def cmd_verify(args, cfg: RunConfig) -> int:
    system, config, cfg = _load(args, cfg)
    params = _region_params(cfg, system)
    results = run_suites(config, params, cfg.quadrature, args.only)
    out = Path(cfg.out)
    rows = [{**asdict(r), "status": r.status} for r in results]
    failed = [r for r in results if not r.vacuous and not r.passed]
    write_json(out / "verify.json", {"epsilon": params.epsilon, "truncation": config.truncation,
                                     "passed": not failed, "checks": rows})
    write_csv(out / "verify.csv", rows, ["name", "status", "n_checked", "n_failed", "worst", "detail"])
    for r in results:
        print(f"{r.status:8s} {r.name}  worst={r.worst:.6g}  {r.detail}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_scan(args, cfg: RunConfig) -> int:
    system, config, cfg = _load(args, cfg)
    params = WeightParams(cfg.p, cfg.alpha, cfg.allow_trivial)
    eps = _region_params(cfg, system).epsilon
    sub = None
    if cfg.subdomain is not None:
        sub = (np.asarray(cfg.subdomain[:-1]), float(cfg.subdomain[-1]))
    report = ap_scan(config, params, cfg.l_values(), cfg.quadrature, eps, sub)
    out = Path(cfg.out)
    rows = report.rows()
    write_csv(out / "scan.csv", rows, SCAN_COLUMNS)
    atomic_write_text(out / "scan.dat", "# l ratio\n" + "".join(f"{r['l']} {r['ratio']}\n" for r in rows))
    crossover = next((b.crossover for b in report.bounds if isinstance(b, NotYetPositive)), None)
    if crossover is not None:
        print(f"bound not yet positive below l* = {crossover:.6g}")
    print(f"slope {report.slope:.6g} over {report.n_inside} balls")
    return EXIT_OK


def cmd_norms(args, cfg: RunConfig) -> int:
    _, config, cfg = _load(args, cfg)
    rep = sobolev_partial_norms(config, args.mode, args.exponent, cfg.quadrature)
    out = Path(cfg.out)
    stem = f"norms_{args.mode}_{args.exponent:g}"
    write_csv(out / f"{stem}.csv", rep.rows(), ["k", "term", "se", "bound", "cumulative", "cumulative_bound"])
    ok = bool(np.all(rep.terms <= rep.bounds + 3.0 * rep.term_se) and rep.cumulative[-1] <= rep.majorant)
    write_json(out / f"{stem}.json", {"mode": rep.mode, "exponent": rep.exponent, "majorant": rep.majorant,
                                      "total": float(rep.cumulative[-1]), "within_bounds": ok})
    print(f"total {rep.cumulative[-1]:.6g}  majorant {rep.majorant:.6g}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_hessian_integral(args, cfg: RunConfig) -> int:
    _, config, cfg = _load(args, cfg)
    rep = weighted_hessian_integral(config, cfg.p, args.truncations, cfg.quadrature)
    out = Path(cfg.out)
    cols = ["L", "I", "se", "unweighted", "holder_hessian", "holder_symgrad", "holder_bound"]
    write_csv(out / "hessian_integral.csv", rep.rows(), cols)
    for row in rep.rows():
        print(f"L={row['L']}  I={float(row['I']):.8g}  unweighted={float(row['unweighted']):.8g}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    _, config, _ = _load(args, cfg)
    pts = np.array(args.point, dtype=np.float64)
    jet = eval_field_jet(config, pts, order=max(args.order, 1))
    sg = sym_gradient(jet)
    docs = []
    for i in range(len(pts)):
        d = jet.to_dict(i)
        d["x"] = pts[i].tolist()
        d["symgrad_norm"] = float(sg.magnitude[i])
        docs.append(d)
    print(json.dumps(docs, indent=2))
    return EXIT_OK


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "scan": cmd_scan, "norms": cmd_norms,
            "hessian-integral": cmd_hessian_integral, "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except DomainError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ApblowError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
