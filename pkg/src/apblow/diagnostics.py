"""Batch verification suites for the constructed field.

Every suite returns :class:`CheckResult` records. A record is *vacuous* when
the inequality it tests has a non-positive right-hand side at the chosen
parameters; vacuous records are reported, never counted as passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NonSmoothPoint, RegionEmpty
from .field import (
    FieldConfig,
    bump_local_jet,
    divergence,
    eval_bump_jet,
    eval_field_jet,
    eval_lift_jet,
    frobenius,
    smooth_margin_ok,
    sym_gradient,
)
from .geometry import (
    AnchoredPoints,
    RegionParams,
    check_containment,
    check_radius_decay,
    check_window_disjointness,
    covered_by,
    icbrt,
    region_membership,
    reference_points,
)
from .sampling import QuadratureSpec, mean_and_se, uniform_ball

STREAM_BOUNDS = 31
STREAM_DECOMP = 32
STREAM_SANDWICH = 33
STREAM_SOBOLEV = 34
STREAM_R13 = 35
STREAM_DIV = 36
STREAM_FD = 37

RTOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    n_checked: int = 0
    n_failed: int = 0
    worst: float = float("nan")
    vacuous: bool = False
    detail: str = ""

    @property
    def status(self) -> str:
        if self.vacuous:
            return "vacuous"
        return "pass" if self.passed else "fail"


def ball_volume(n: int) -> float:
    return math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0))


def _require_l(config: FieldConfig, l: int):
    if not 1 <= l <= config.truncation:
        raise DomainError(f"ball index {l} outside 1..{config.truncation}")


# ---------------------------------------------------------------- pointwise bump estimates


@dataclass
class BoundsReport:
    k: int
    value_ratio: float
    gradient_ratio: float
    hessian_ratio: float
    outside_max: float
    n_samples: int

    @property
    def worst(self) -> float:
        return max(self.value_ratio, self.gradient_ratio, self.hessian_ratio)


def bounds_check(config: FieldConfig, k: int, quadrature: QuadratureSpec) -> BoundsReport:
    """Largest observed ``|u^k_m|/(k r_k)``, ``|d_i u^k_m|/(2k)``, ``|d_j d_i u^k_m|/(4k/r_k)``.

    Samples fill ``B_k``; a second batch in ``E_k`` minus ``B_k`` must give exact zeros.
    """
    _require_l(config, k)
    system = config.system
    # scale-free jets: u = r V, grad u = G, hess u = H / r
    y = uniform_ball(quadrature, system.n, (STREAM_BOUNDS, k))
    V, G, H, flags = bump_local_jet(system.local(AnchoredPoints(k, 0.5 * y), k), k, 2, config.eta)
    value_ratio = float(np.max(np.abs(V))) / k
    gradient_ratio = float(np.max(np.abs(G))) / (2.0 * k)
    ok = flags == 0
    hessian_ratio = float(np.max(np.abs(H[ok]))) / (4.0 * k) if np.any(ok) else 0.0
    # shell E_k \ B_k: radii in (1/2, 1) of R_k
    t = np.sqrt(np.einsum("ij,ij->i", y, y))
    shell = y / np.maximum(t, 1e-300)[:, None] * (0.5 + 0.5 * t)[:, None] * (1.0 + 1e-9)
    Vo, Go, Ho, _ = bump_local_jet(system.local(AnchoredPoints(k, shell), k), k, 2)
    outside_max = float(max(np.max(np.abs(Vo)), np.max(np.abs(Go)), np.max(np.abs(Ho))))
    return BoundsReport(k, value_ratio, gradient_ratio, hessian_ratio, outside_max, quadrature.n_samples)


# ---------------------------------------------------------------- decomposition on M_l


def _region_samples(config, params, l, region, quadrature, stream, reference="B", budget=8):
    """Rejection sampling of a region from its reference ball; grows the stream up to ``budget`` blocks."""
    system = config.system
    N = quadrature.n_samples
    for rounds in range(1, budget + 1):
        pts = reference_points(system, l, reference, quadrature, stream, 0, N * rounds)
        mask = region_membership(system, params, l, pts, region)
        if np.count_nonzero(mask) >= min(N, 16) or rounds == budget:
            break
    if not np.any(mask):
        raise RegionEmpty(f"no sample of region {region} for l={l}")
    return pts.subset(mask)


def decomposition_check(config: FieldConfig, params: RegionParams, l: int,
                        quadrature: QuadratureSpec) -> CheckResult:
    """Compare the full bump-sum ``Du^0`` with ``Du^l + sum_{k <= cbrt(l)} Du^k`` on ``M_l``."""
    _require_l(config, l)
    system = config.system
    pts = _region_samples(config, params, l, "M", quadrature, (STREAM_DECOMP, l))
    full = sym_gradient(eval_field_jet(config, pts, order=1, bumps_only=True)).D
    parts = [sym_gradient(eval_bump_jet(system, l, pts, order=1)).D]
    parts += [sym_gradient(eval_bump_jet(system, k, pts, order=1)).D for k in range(1, icbrt(l) + 1) if k != l]
    two = parts[0].copy()
    scale = frobenius(parts[0])
    for P in parts[1:]:
        two += P
        scale += frobenius(P)
    dev = frobenius(full - two) / np.maximum(scale, np.finfo(float).tiny)
    worst = float(np.max(dev))
    return CheckResult(f"decomposition l={l}", worst <= RTOL, len(pts), int(np.count_nonzero(dev > RTOL)), worst)


# ---------------------------------------------------------------- sandwich bounds


def shear_threshold(epsilon: float, l: int) -> float:
    return epsilon**3 * l / (1.0 - epsilon)


def sandwich_check(config: FieldConfig, params: RegionParams, l: int,
                   quadrature: QuadratureSpec) -> list[CheckResult]:
    """Pointwise bounds along ``E_l``:

    (a) ``|d_1 u^l_1| >= eps^3 l / (1 - eps)`` on ``G_l``;
    (b) ``|Du^0| >= eps^3 l/(1-eps) - 2n l^(2/3)`` on ``M_l`` (vacuous while the right side is <= 0);
    (c) ``|Du^0| <= 2n l^(2/3)`` on ``E_l`` minus ``B_k``, ``k >= l``;
    plus the triangle step on ``M_l`` and ``1 + |Du| >= |Du^0|``.
    """
    _require_l(config, l)
    if 2 * l > config.truncation:
        raise DomainError("sandwich_check needs l <= L/2")
    system = config.system
    n = system.n
    eps = params.epsilon
    thr = shear_threshold(eps, l)
    l23 = float(l) ** (2.0 / 3.0)
    results = []

    g = _region_samples(config, params, l, "G", quadrature, (STREAM_SANDWICH, l, 1))
    d11 = np.abs(eval_bump_jet(system, l, g, order=1).gradient[:, 0, 0])
    bad = d11 < thr * (1.0 - RTOL)
    results.append(CheckResult(f"shear l={l}", not np.any(bad), len(g), int(np.count_nonzero(bad)),
                               float(np.min(d11) / thr), detail=f"threshold={thr:.6g}"))

    mpts = _region_samples(config, params, l, "M", quadrature, (STREAM_SANDWICH, l, 2))
    jet0 = eval_field_jet(config, mpts, order=1, bumps_only=True)
    du0 = sym_gradient(jet0).magnitude
    rhs = thr - 2.0 * n * l23
    if rhs <= 0.0:
        results.append(CheckResult(f"lower l={l}", True, len(mpts), 0, rhs, vacuous=True,
                                   detail=f"rhs={rhs:.6g} <= 0"))
    else:
        bad = du0 < rhs * (1.0 - RTOL)
        results.append(CheckResult(f"lower l={l}", not np.any(bad), len(mpts), int(np.count_nonzero(bad)),
                                   float(np.min(du0) / rhs), detail=f"rhs={rhs:.6g}"))

    # triangle step: |Du^0| >= |d_1 u_1^l| - n sum_k max_ij |d_i u_j^k|
    lead = np.abs(eval_bump_jet(system, l, mpts, order=1).gradient[:, 0, 0])
    rest = np.zeros(len(mpts))
    for k in range(1, icbrt(l) + 1):
        if k != l:
            rest += np.max(np.abs(eval_bump_jet(system, k, mpts, order=1).gradient), axis=(1, 2))
    lower = lead - n * rest
    bad = du0 < lower - RTOL * (np.abs(lower) + du0)
    results.append(CheckResult(f"triangle l={l}", not np.any(bad), len(mpts), int(np.count_nonzero(bad)),
                               float(np.min(du0 - lower))))

    bg = _region_samples(config, params, l, "background", quadrature, (STREAM_SANDWICH, l, 3), reference="E")
    jet_bg = eval_field_jet(config, bg, order=1)
    du0_bg = sym_gradient(eval_field_jet(config, bg, order=1, bumps_only=True)).magnitude
    cap = 2.0 * n * l23
    bad = du0_bg > cap * (1.0 + RTOL)
    results.append(CheckResult(f"background l={l}", not np.any(bad), len(bg), int(np.count_nonzero(bad)),
                               float(np.max(du0_bg) / cap), detail=f"cap={cap:.6g}"))

    du_bg = sym_gradient(jet_bg).magnitude
    bad = 1.0 + du_bg < du0_bg * (1.0 - RTOL)
    results.append(CheckResult(f"lift sandwich l={l}", not np.any(bad), len(bg), int(np.count_nonzero(bad)),
                               float(np.min(1.0 + du_bg - du0_bg))))
    return results


# ---------------------------------------------------------------- finite differences


@dataclass
class FDReport:
    n_points: int
    worst_deviation: float
    n_floor: int
    n_failed: int
    ratios_gradient: np.ndarray = field(repr=False)
    ratios_hessian: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.n_failed == 0


def _local_step(config: FieldConfig, points: AnchoredPoints) -> np.ndarray:
    """Per-point step factor in anchor units: distance to the nearest center or
    sphere of a nearby bump, capped at 1."""
    system = config.system
    step = np.ones(len(points))
    ymax = float(np.sqrt(np.max(np.einsum("ij,ij->i", points.offsets, points.offsets))))
    for k in system.meeting(points.anchor, 2.0 * ymax + 1.0, inner=True,
                            candidates=np.arange(1, config.truncation + 1)):
        k = int(k)
        z = system.local(points, k)
        t = np.sqrt(np.einsum("ij,ij->i", z, z))
        if points.anchor == 0:
            unit = float(system.r[k - 1])
        else:
            unit = 0.5 * system.radius_ratio(k, points.anchor)
        with np.errstate(over="ignore", invalid="ignore"):
            dist = np.minimum(t, np.abs(1.0 - t)) * unit
        step = np.minimum(step, np.where(np.isfinite(dist), dist, 1.0))
    return step


def finite_difference_check(config: FieldConfig, points: AnchoredPoints, h: float = 1e-3,
                            floor: float = 1e-12, band=(3.5, 4.5)) -> FDReport:
    """Second-order convergence of central differences for gradient and Hessian.

    The step at each point is ``h`` times its distance to the nearest bump
    center or sphere. Error ratios ``e(h)/e(h/2)`` must lie in ``band``
    unless both errors are already below ``floor``.
    """
    if not np.all(smooth_margin_ok(config, points, config.eta)):
        raise NonSmoothPoint("a finite-difference point lies within eta of a center or sphere")
    system = config.system
    n = system.n
    ms, es = system.scale(points.anchor)
    # The lift is a cubic polynomial of absolute x. Differencing it with the
    # local bump step only measures rounding, so it gets a unit-scale step.
    base = eval_field_jet(config, points, order=2, bumps_only=True)
    x = points.absolute(system)
    lift = eval_lift_jet(config.c_w, x, 2)
    unit = _local_step(config, points)

    def central(jp, jm, width):
        return ((jp.value - jm.value) / width[:, None],
                (jp.gradient - jm.gradient) / width[:, None, None])

    def errors(hh):
        eg = np.zeros(len(points))
        eh = np.zeros(len(points))
        for j in range(n):
            yp, ym = points.offsets.copy(), points.offsets.copy()
            yp[:, j] += hh * unit
            ym[:, j] -= hh * unit
            width = np.ldexp((yp[:, j] - ym[:, j]) * ms, es)  # the step actually taken
            fd_g, fd_h = central(eval_field_jet(config, AnchoredPoints(points.anchor, yp), 1, True),
                                 eval_field_jet(config, AnchoredPoints(points.anchor, ym), 1, True), width)
            xp, xm = x.copy(), x.copy()
            xp[:, j] += hh
            xm[:, j] -= hh
            lg, lh = central(eval_lift_jet(config.c_w, xp, 1), eval_lift_jet(config.c_w, xm, 1), xp[:, j] - xm[:, j])
            for fd, exact in ((fd_g, base.gradient), (lg, lift.gradient)):
                eg = np.maximum(eg, np.max(np.abs(fd - exact[:, :, j]), axis=1))
            for fd, exact in ((fd_h, base.hessian), (lh, lift.hessian)):
                eh = np.maximum(eh, np.max(np.abs(fd - exact[:, :, :, j]), axis=(1, 2)))
        return eg, eh

    g1, h1 = errors(h)
    g2, h2 = errors(h / 2.0)
    lo, hi = band
    worst = 0.0
    failed = floored = 0
    rg = np.full(len(points), np.nan)
    rh = np.full(len(points), np.nan)
    for e1, e2, store in ((g1, g2, rg), (h1, h2, rh)):
        tiny = (e1 < floor) & (e2 < floor)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = e1 / e2
        store[~tiny] = ratio[~tiny]
        floored += int(np.count_nonzero(tiny))
        bad = ~tiny & ~((ratio >= lo) & (ratio <= hi))
        failed += int(np.count_nonzero(bad))
        if np.any(~tiny):
            worst = max(worst, float(np.nanmax(np.abs(ratio[~tiny] - 4.0))))
    return FDReport(len(points), worst, floored, failed, rg, rh)


def smooth_sample(config: FieldConfig, anchor: int, count: int, quadrature: QuadratureSpec,
                  margin: float = 0.05, radius: float = 1.0) -> AnchoredPoints:
    """Points of ``B(x^a, radius * scale_a)`` at relative distance ``>= margin``
    from every bump center and sphere (the domain frame for ``anchor = 0``)."""
    spec = quadrature.with_samples(max(4 * count, 64))
    y = radius * uniform_ball(spec, config.n, (STREAM_FD, anchor))
    if anchor == 0:
        y = y * 0.98
    pts = AnchoredPoints(anchor, y)
    keep = smooth_margin_ok(config, pts, margin)
    sel = np.flatnonzero(keep)[:count]
    return pts.subset(sel)


# ---------------------------------------------------------------- divergence


def divergence_check(config: FieldConfig, points_list, tol: float = RTOL) -> CheckResult:
    """``|div u| / (1 + |grad u|) <= tol`` on every batch."""
    worst = 0.0
    total = failed = 0
    for pts in points_list:
        jet = eval_field_jet(config, pts, order=1)
        rel = np.abs(divergence(jet)) / (1.0 + frobenius(jet.gradient))
        worst = max(worst, float(np.max(rel)) if len(pts) else 0.0)
        total += len(pts)
        failed += int(np.count_nonzero(rel > tol))
    return CheckResult("divergence", failed == 0, total, failed, worst)


def divergence_points(config: FieldConfig, quadrature: QuadratureSpec, anchors) -> list[AnchoredPoints]:
    """A global batch plus one batch inside each ``E_a`` (anchored)."""
    out = [AnchoredPoints(0, uniform_ball(quadrature, config.n, (STREAM_DIV, 0)))]
    for a in anchors:
        out.append(AnchoredPoints(int(a), uniform_ball(quadrature, config.n, (STREAM_DIV, int(a)))))
    return out


# ---------------------------------------------------------------- Sobolev series


@dataclass
class SeriesReport:
    mode: str
    exponent: float
    ks: np.ndarray
    terms: np.ndarray
    term_se: np.ndarray
    bounds: np.ndarray
    cumulative: np.ndarray
    cumulative_bounds: np.ndarray
    majorant: float

    def rows(self):
        return [{"k": int(k), "term": repr(float(t)), "se": repr(float(s)), "bound": repr(float(b)),
                 "cumulative": repr(float(c)), "cumulative_bound": repr(float(cb))}
                for k, t, s, b, c, cb in zip(self.ks, self.terms, self.term_se, self.bounds,
                                             self.cumulative, self.cumulative_bounds)]


def _geometric_k_sum(x: float) -> float:
    """``sum_{k>=1} k x^k``."""
    return x / (1.0 - x) ** 2


def sobolev_partial_norms(config: FieldConfig, mode: str, exponent: float,
                          quadrature: QuadratureSpec) -> SeriesReport:
    """Per-bump Lebesgue norms of ``grad u^k`` (``mode='grad'``, exponent ``s``) or
    ``grad^2 u^k`` (``mode='hess'``, exponent ``q`` in ``(1, n)``).

    Each term is the largest component norm, matching the componentwise bounds
    ``2k |B_k|^(1/s)`` and ``4k/r_k |B_k|^(1/q)``. Terms are assembled in log
    space so they stay finite for radii below the float64 range.
    """
    system = config.system
    n = system.n
    if mode not in ("grad", "hess"):
        raise DomainError("mode must be 'grad' or 'hess'")
    if not exponent > 1.0:
        raise DomainError("exponent must exceed 1")
    if mode == "hess" and not exponent < n:
        raise DomainError(f"hess mode needs q < n = {n}; the series diverges otherwise")
    s = float(exponent)
    logw = math.log(ball_volume(n))
    log_r = system.log_r()
    ks = np.arange(1, config.truncation + 1)
    terms = np.zeros(ks.size)
    ses = np.zeros(ks.size)
    bounds = np.zeros(ks.size)
    for i, k in enumerate(ks):
        z = uniform_ball(quadrature, n, (STREAM_SOBOLEV, int(k)))
        _, G, H, _ = bump_local_jet(z, int(k), order=2 if mode == "hess" else 1)
        A = np.abs(G if mode == "grad" else H).reshape(len(z), -1) ** s
        means = A.mean(axis=0)
        j = int(np.argmax(means))
        M, se = mean_and_se(A[:, j])
        log_vol = logw + n * log_r[k - 1]
        log_pref = log_vol / s - (log_r[k - 1] if mode == "hess" else 0.0)
        terms[i] = math.exp(log_pref + math.log(M) / s) if M > 0 else 0.0
        ses[i] = terms[i] * se / (s * M) if M > 0 else 0.0
        const = 2.0 if mode == "grad" else 4.0
        bounds[i] = const * k * math.exp(log_pref)
    if mode == "grad":
        x = system.rho ** (n / s)
        majorant = 2.0 * math.exp(logw / s) * _geometric_k_sum(x)
    else:
        x = system.rho ** (n / s - 1.0)
        majorant = 4.0 * math.exp(logw / s) * _geometric_k_sum(x)
    return SeriesReport(mode, s, ks, terms, ses, bounds, np.cumsum(terms), np.cumsum(bounds), majorant)


# ---------------------------------------------------------------- weighted Hessian integral


@dataclass
class WeightedHessianReport:
    p: float
    truncations: list
    integrals: list
    standard_errors: list
    unweighted: list
    holder_hessian: list
    holder_symgrad: list
    holder_bound: list

    @property
    def increments(self) -> list:
        return [abs(b - a) for a, b in zip(self.integrals, self.integrals[1:])]

    def rows(self):
        out = []
        for i, L in enumerate(self.truncations):
            out.append({"L": L, "I": repr(self.integrals[i]), "se": repr(self.standard_errors[i]),
                        "unweighted": repr(self.unweighted[i]),
                        "holder_hessian": "" if self.holder_hessian[i] is None else repr(self.holder_hessian[i]),
                        "holder_symgrad": "" if self.holder_symgrad[i] is None else repr(self.holder_symgrad[i]),
                        "holder_bound": "" if self.holder_bound[i] is None else repr(self.holder_bound[i])})
        return out


def weighted_hessian_integral(config: FieldConfig, p: float, truncations,
                              quadrature: QuadratureSpec) -> WeightedHessianReport:
    """``I_L = int (1+|Du|)^(p-2) |grad^2 u|^2`` over the domain for each truncation ``L``.

    The domain is split into ``S_0 = Omega \\ U B_k`` and
    ``S_k = B_k \\ U_{j>k} B_j``; each stratum has its own sample stream,
    shared between truncations, so successive ``I_L`` use common random
    numbers.
    """
    if not p > 1.0:
        raise DomainError("p must exceed 1")
    truncations = [int(L) for L in truncations]
    if truncations != sorted(truncations) or truncations[0] < 1 or truncations[-1] > len(config.system):
        raise DomainError("truncations must be increasing and within the system")
    system = config.system
    n = system.n
    omega = ball_volume(n)
    out = WeightedHessianReport(p, truncations, [], [], [], [], [], [])
    for L in truncations:
        cfg = FieldConfig(system, L, config.c_w, config.eta)
        strata = [(AnchoredPoints(0, uniform_ball(quadrature, n, (STREAM_R13, 0))), omega, range(1, L + 1))]
        for k in range(1, L + 1):
            pts = AnchoredPoints(k, 0.5 * uniform_ball(quadrature, n, (STREAM_R13, k)))
            vol = omega * math.exp(n * system.log_r()[k - 1])
            strata.append((pts, vol, range(k + 1, L + 1)))
        total = var = unweighted = hess52 = sym5 = 0.0
        for pts, vol, later in strata:
            keep = ~covered_by(system, pts, np.asarray(list(later), dtype=np.int64)) if len(later) else \
                np.ones(len(pts), dtype=bool)
            jet = eval_field_jet(cfg, pts, order=2)
            hn2 = np.sum(jet.hessian.reshape(len(pts), -1) ** 2, axis=1)
            du = sym_gradient(jet).magnitude
            f = np.where(keep, (1.0 + du) ** (p - 2.0) * hn2, 0.0)
            m, se = mean_and_se(f)
            total += vol * m
            var += (vol * se) ** 2
            unweighted += vol * float(np.mean(np.where(keep, hn2, 0.0)))
            if p > 2.0:
                hess52 += vol * float(np.mean(np.where(keep, hn2 ** 1.25, 0.0)))
                sym5 += vol * float(np.mean(np.where(keep, du ** (5.0 * (p - 2.0)), 0.0)))
        out.integrals.append(total)
        out.standard_errors.append(math.sqrt(var))
        out.unweighted.append(unweighted)
        if p > 2.0:
            a, b = hess52 ** 0.8, sym5 ** 0.2
            out.holder_hessian.append(a)
            out.holder_symgrad.append(b)
            out.holder_bound.append(2.0**p * unweighted + 2.0**p * a * b)
        else:
            out.holder_hessian.append(None)
            out.holder_symgrad.append(None)
            out.holder_bound.append(None)
    return out


# ---------------------------------------------------------------- geometry suite


def geometry_checks(system) -> list[CheckResult]:
    viol = check_window_disjointness(system)
    res = [CheckResult("window disjointness", not viol, len(system), len(viol),
                       detail=", ".join(f"({k},{l})" for k, l in viol[:10]))]
    if len(system) >= 2:
        ok, worst = check_radius_decay(system)
        res.append(CheckResult("radius decay", ok, len(system) - 1, 0 if ok else 1, worst,
                               detail=f"rho={system.rho}"))
    bad = check_containment(system)
    res.append(CheckResult("containment", not bad, len(system), len(bad),
                           detail=", ".join(map(str, bad[:10]))))
    return res
