"""Averaged-integral ratios of the Muckenhoupt condition on balls.

For a weight ``w`` and exponent ``alpha > 1`` the ratio on a ball ``B`` is::

    ratio = mean_B(w) * mean_B(w ** (1 - alpha')) ** (alpha - 1)

with ``alpha' = alpha / (alpha - 1)``. Means are Monte Carlo averages over a
:class:`~apblow.sampling.QuadratureSpec` stream; standard errors come from
the delta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyScan
from .field import FieldConfig, eval_field_jet, sym_gradient
from .geometry import AnchoredPoints
from .sampling import QuadratureSpec, chunks, parallel_map, uniform_ball

STREAM_AP = 21

SCAN_COLUMNS = ["l", "ratio", "se_ratio", "mean_w", "mean_w_dual", "explicit_bound", "bound_status", "samples"]


def dual_exponent(alpha: float) -> float:
    """Hoelder conjugate ``alpha / (alpha - 1)``."""
    if not alpha > 1.0:
        raise DomainError(f"alpha must exceed 1, got {alpha}")
    return alpha / (alpha - 1.0)


@dataclass(frozen=True)
class WeightParams:
    """Exponents of the weight ``(1 + |Du|)^(p-2)`` and of the ``A_alpha`` test."""

    p: float
    alpha: float
    allow_trivial: bool = False

    def __post_init__(self):
        if not self.p > 1.0:
            raise DomainError("p must exceed 1")
        if self.p == 2.0 and not self.allow_trivial:
            raise DomainError("p = 2 gives the constant weight; pass allow_trivial=True")
        dual_exponent(self.alpha)

    @property
    def alpha_dual(self) -> float:
        return dual_exponent(self.alpha)

    @property
    def p0(self) -> float:
        return p0_map(self)


def p0_map(params: WeightParams) -> float:
    """``p_0 = (p - 2) / (1 - alpha) + 2``; maps ``p < 2`` to ``p_0 > 2``."""
    if not 1.0 < params.p < 2.0:
        raise DomainError("p0_map needs p in (1, 2)")
    return (params.p - 2.0) / (1.0 - params.alpha) + 2.0


@dataclass(frozen=True)
class APRatioEstimate:
    l: int | None
    mean_w: float
    mean_w_dual: float
    ratio: float
    se_mean_w: float
    se_mean_w_dual: float
    se_ratio: float
    n_samples: int


def ratio_from_weights(w: np.ndarray, alpha: float, l: int | None = None) -> APRatioEstimate:
    """Ratio estimate from weight samples, with delta-method errors."""
    w = np.asarray(w, dtype=np.float64)
    ad = dual_exponent(alpha)
    N = w.size
    # the ratio is invariant under w -> c w; normalising makes constants exact
    scale = float(np.max(w))
    v = w / scale
    vd = v ** (1.0 - ad)
    A = float(np.mean(v))
    B = float(np.mean(vd))
    ratio = A * B ** (alpha - 1.0)
    dual_scale = scale ** (1.0 - ad)
    if N > 1:
        cov = np.cov(np.vstack([v, vd]), ddof=1) / N
        g = np.array([B ** (alpha - 1.0), (alpha - 1.0) * A * B ** (alpha - 2.0)])
        se = float(math.sqrt(max(g @ cov @ g, 0.0)))
        seA, seB = scale * float(math.sqrt(cov[0, 0])), dual_scale * float(math.sqrt(cov[1, 1]))
    else:
        se = seA = seB = 0.0
    return APRatioEstimate(l, scale * A, dual_scale * B, ratio, seA, seB, se, N)


def _ball_points(config, ball, spec: QuadratureSpec, start, stop):
    """Anchored uniform samples of ``E_l`` (integer ball) or of ``(center, radius)``."""
    if isinstance(ball, (int, np.integer)):
        y = uniform_ball(spec, config.n, (STREAM_AP, int(ball)), start, stop)
        return AnchoredPoints(int(ball), y)
    center, radius = ball
    center = np.asarray(center, dtype=np.float64)
    y = uniform_ball(spec, center.size, (STREAM_AP, 0), start, stop)
    return AnchoredPoints(0, center + radius * y)


def du_magnitudes(config: FieldConfig, ball, quadrature: QuadratureSpec) -> np.ndarray:
    """``|Du|`` at the sample stream of a ball (ordered, partition independent)."""

    def work(span):
        pts = _ball_points(config, ball, quadrature, *span)
        return sym_gradient(eval_field_jet(config, pts, order=1)).magnitude

    return np.concatenate(parallel_map(work, chunks(quadrature.n_samples)))


def ap_ratio(config: FieldConfig | None, params: WeightParams, ball, quadrature: QuadratureSpec,
             weight=None) -> APRatioEstimate:
    """``A_alpha`` ratio on a ball.

    ``ball`` is a 1-based index ``l`` (meaning ``E_l``) or ``(center, radius)``.
    By default the weight is ``(1 + |Du|)^(p-2)`` of the configured field; a
    callable ``weight(x)`` of absolute positions replaces it.
    """
    if weight is None:
        w = (1.0 + du_magnitudes(config, ball, quadrature)) ** (params.p - 2.0)
    else:
        def work(span):
            pts = _ball_points(config, ball, quadrature, *span)
            x = pts.offsets if pts.anchor == 0 else pts.absolute(config.system)
            return np.asarray(weight(x), dtype=np.float64)

        w = np.concatenate(parallel_map(work, chunks(quadrature.n_samples)))
    l = int(ball) if isinstance(ball, (int, np.integer)) else None
    return ratio_from_weights(w, params.alpha, l)


def duality_identity_check(config: FieldConfig, params: WeightParams, ball,
                           quadrature: QuadratureSpec, magnitudes=None) -> float:
    """Relative gap between the direct ratio and its ``p_0`` rewriting.

    Both sides use the same ``|Du|`` samples; the rewriting is::

        ((mean (1+|Du|)^((p0-2)(1-alpha)))^(alpha'-1) * mean (1+|Du|)^(p0-2))^(alpha-1)
    """
    p0 = p0_map(params)
    a, ad = params.alpha, params.alpha_dual
    m = du_magnitudes(config, ball, quadrature) if magnitudes is None else np.asarray(magnitudes)
    base = 1.0 + m
    direct = ratio_from_weights(base ** (params.p - 2.0), a).ratio
    first = float(np.mean(base ** ((p0 - 2.0) * (1.0 - a))))
    second = float(np.mean(base ** (p0 - 2.0)))
    via_p0 = (first ** (ad - 1.0) * second) ** (a - 1.0)
    return abs(direct - via_p0) / abs(direct)


# ---------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class LowerBoundConstants:
    """Explicit constants of the blow-up bound for ``p > 2``.

    ``mean_El w >= C1 (c l - background l^(2/3))^(p-2)`` and
    ``(mean_El w^(1-alpha'))^(alpha-1) >= C3^(alpha-1) (C4 + l^(2/3))^(2-p)``.
    The second line comes from ``(2 + 2n l^(2/3))^((p-2)(1-alpha'))`` on the
    background set of relative measure ``1 - 1/(3 2^(n-2))``, i.e.
    ``C3 = (1 - 1/(3 2^(n-2))) (2n)^((p-2)(1-alpha'))`` and ``C4 = 2/(2n)``.
    """

    n: int
    p: float
    alpha: float
    epsilon: float
    C1: float = field(init=False)
    c: float = field(init=False)
    background: float = field(init=False)
    C3: float = field(init=False)
    C4: float = field(init=False)

    def __post_init__(self):
        if not self.p > 2.0:
            raise DomainError("the explicit bound needs p > 2")
        ad = dual_exponent(self.alpha)
        n = self.n
        object.__setattr__(self, "C1", 1.0 / (3.0 * 2.0**n))
        object.__setattr__(self, "c", self.epsilon**3 / (1.0 - self.epsilon))
        object.__setattr__(self, "background", 2.0 * n)
        frac = 1.0 - 1.0 / (3.0 * 2.0 ** (n - 2))
        object.__setattr__(self, "C3", frac * (2.0 * n) ** ((self.p - 2.0) * (1.0 - ad)))
        object.__setattr__(self, "C4", 2.0 / (2.0 * n))

    @property
    def crossover(self) -> float:
        """``l* = (2n / c)^3`` where the shear term overtakes the background."""
        return (self.background / self.c) ** 3


@dataclass(frozen=True)
class NotYetPositive:
    """The bound is vacuous at this ``l`` (numerator ``c l - 2n l^(2/3) <= 0``)."""

    l: int
    crossover: float


def lower_bound(consts: LowerBoundConstants, params: WeightParams, l: int):
    """Explicit lower bound on the ratio over ``E_l`` for ``p > 2``, or :class:`NotYetPositive`."""
    if not params.p > 2.0:
        raise DomainError("lower_bound needs p > 2; map p < 2 through p0_map first")
    l23 = float(l) ** (2.0 / 3.0)
    num = consts.c * l - consts.background * l23
    if num <= 0.0:
        return NotYetPositive(int(l), consts.crossover)
    base = num / (consts.C4 + l23)
    return consts.C1 * consts.C3 ** (params.alpha - 1.0) * base ** (params.p - 2.0)


def explicit_bound(params: WeightParams, epsilon: float, n: int, l: int):
    """Bound for any ``p != 2``: direct for ``p > 2``; for ``p < 2`` the ratio is the
    ``(alpha - 1)``-th power of the ``A_alpha'`` ratio of the ``p_0`` weight."""
    if params.p > 2.0:
        return lower_bound(LowerBoundConstants(n, params.p, params.alpha, epsilon), params, l)
    p0 = p0_map(params)
    dual = WeightParams(p0, params.alpha_dual)
    inner = lower_bound(LowerBoundConstants(n, p0, dual.alpha, epsilon), dual, l)
    if isinstance(inner, NotYetPositive):
        return inner
    return inner ** (params.alpha - 1.0)


# ---------------------------------------------------------------- scans


@dataclass
class APScanReport:
    estimates: list
    bounds: list
    slope: float
    n_inside: int
    params: WeightParams

    def rows(self):
        out = []
        for est, b in zip(self.estimates, self.bounds):
            if isinstance(b, NotYetPositive):
                bound, status = "", "not_yet_positive"
            elif b is None:
                bound, status = "", "trivial"
            else:
                bound, status = repr(float(b)), "positive"
            out.append({"l": est.l, "ratio": repr(est.ratio), "se_ratio": repr(est.se_ratio),
                        "mean_w": repr(est.mean_w), "mean_w_dual": repr(est.mean_w_dual),
                        "explicit_bound": bound, "bound_status": status, "samples": est.n_samples})
        return out


def loglog_slope(ls, ratios) -> float:
    ls = np.asarray(ls, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    if ls.size < 2:
        return 0.0
    return float(np.polyfit(np.log(ls), np.log(ratios), 1)[0])


def ap_scan(config: FieldConfig, params: WeightParams, l_values, quadrature: QuadratureSpec,
            epsilon: float, subdomain=None) -> APScanReport:
    """Ratios over ``E_l`` for the given indices, with the explicit bound per ``l``.

    ``subdomain = (center, radius)`` keeps only balls with ``E_l`` inside it.
    """
    system = config.system
    ls = [int(l) for l in l_values if 1 <= int(l) <= config.truncation]
    if subdomain is not None:
        center, radius = subdomain
        center = np.asarray(center, dtype=np.float64)
        d = np.linalg.norm(system.centers[np.asarray(ls, dtype=np.int64) - 1] - center, axis=1) if ls else []
        ls = [l for l, dist in zip(ls, d) if dist + system.R[l - 1] <= radius]
    if not ls:
        raise EmptyScan("no ball E_l of the range fits the subdomain")
    estimates = [ratio_from_weights((1.0 + du_magnitudes(config, l, quadrature)) ** (params.p - 2.0),
                                    params.alpha, l) for l in ls]
    if params.p == 2.0:
        bounds = [None] * len(ls)
    else:
        bounds = [explicit_bound(params, epsilon, system.n, l) for l in ls]
    slope = loglog_slope(ls, [e.ratio for e in estimates])
    return APScanReport(estimates, bounds, slope, len(ls), params)
