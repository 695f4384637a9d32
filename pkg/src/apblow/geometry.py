"""Ball systems on the unit ball and region predicates.

A :class:`BallSystem` holds balls ``E_k = B(x^k, R_k)`` with inner balls
``B_k = B(x^k, R_k / 2)``. Ball indices are 1-based throughout the public
API. Radii shrink geometrically and leave the float64 exponent range after
roughly a thousand balls, so each radius is stored as ``mantissa * 2**exp``
and every geometric predicate is evaluated in the local coordinates of the
ball it concerns. Points that must be located inside very small balls are
carried as :class:`AnchoredPoints` (anchor ball index plus offset in units of
that ball's outer radius).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext

import numpy as np
from scipy.spatial import cKDTree

from . import ddouble as dd
from .errors import (
    CalibrationFailed,
    CandidateSearchOverflow,
    DomainError,
    IndexOutOfRange,
    InsufficientBalls,
    PrecisionExhausted,
)
from .sampling import QuadratureSpec, fraction_and_se, uniform_ball

DISJOINT_RTOL = 1e-12
DECAY_RTOL = 1e-12
# relative clearance demanded from a new center to every blocking sphere
ADMISSION_MARGIN = 1e-9
REGIONS = ("E", "B", "G", "M", "background")

STREAM_REGION = 11
STREAM_CALIBRATE = 12
STREAM_COVERING = 13


def icbrt(n: int) -> int:
    """Integer cube root ``floor(n ** (1/3))`` for ``n >= 0``."""
    r = int(round(n ** (1.0 / 3.0)))
    while r**3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return r


@dataclass(frozen=True)
class Domain:
    """The open unit ball of R^n centred at the origin."""

    n: int = 2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {self.n}")

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.einsum("ij,ij->i", x, x) < 1.0


@dataclass(frozen=True)
class RegionParams:
    """Slab and annulus margin ``epsilon`` of the good region G_l."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class RegionReport:
    region: str
    l: int
    fraction: float
    se: float
    n_samples: int
    reference: str
    tail_bound: float = 0.0


# ---------------------------------------------------------------- dense sequence


def _level_lattice(n: int, m: int) -> np.ndarray:
    """Integer points of level ``m`` in lexicographic order, coarser ones removed."""
    side = 1 << m
    ax = np.arange(-side + 1, side)
    grid = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.einsum("ij,ij->i", grid, grid) < side * side
    if m > 0:
        keep &= np.any(grid % 2 != 0, axis=1)
    return grid[keep]


class _DyadicEnumeration:
    """Lazily materialised enumeration of dyadic points of the unit ball."""

    def __init__(self, n: int):
        self.n = n
        self.levels = 0
        self.points = np.empty((0, n))

    @property
    def spacing(self) -> float:
        return 2.0 ** -(self.levels - 1)

    def extend(self):
        m = self.levels
        pts = _level_lattice(self.n, m) / float(1 << m)
        self.points = np.concatenate([self.points, pts])
        self.levels += 1
        return pts.shape[0]

    def ensure(self, count: int):
        while self.points.shape[0] < count:
            self.extend()


_ENUMERATIONS: dict[int, _DyadicEnumeration] = {}


def dense_sequence(domain: Domain, index: int) -> np.ndarray:
    """The ``index``-th point (1-based) of the dyadic enumeration of the domain.

    Points of ``2^-m Z^n`` inside the open unit ball are listed level by level
    (increasing ``m``), lexicographically within a level, skipping points
    already listed at a coarser level.
    """
    if index < 1:
        raise DomainError("index must be >= 1")
    enum = _ENUMERATIONS.setdefault(domain.n, _DyadicEnumeration(domain.n))
    enum.ensure(index)
    return enum.points[index - 1].copy()


# ---------------------------------------------------------------- ball system


def _normalize(mant, exp):
    m, de = np.frexp(np.asarray(mant, dtype=np.float64))
    return m, np.asarray(exp, dtype=np.int64) + de


def _scaled_less(m1, e1, m2, e2) -> bool:
    """Compare two positive normalised scaled numbers ``m1*2^e1 < m2*2^e2``."""
    if e1 != e2:
        return e1 < e2
    return m1 < m2


@dataclass(frozen=True, eq=False)
class BallSystem:
    """Immutable ball system ``E_k = B(x^k, R_k)``, ``k = 1..L``.

    Centers are double-double (``center_hi + center_lo``) and outer radii are
    ``R_mant * 2**R_exp`` with ``R_mant`` in [0.5, 1).
    """

    domain: Domain
    rho: float
    center_hi: np.ndarray
    center_lo: np.ndarray
    R_mant: np.ndarray
    R_exp: np.ndarray
    construction: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not 0.0 < self.rho < 0.5:
            raise DomainError("rho must lie in (0, 1/2)")
        L = self.center_hi.shape[0]
        if self.center_hi.shape != (L, self.domain.n) or self.center_lo.shape != (L, self.domain.n):
            raise DomainError("center arrays have the wrong shape")
        m, e = _normalize(self.R_mant, self.R_exp)
        if np.any(m <= 0):
            raise DomainError("radii must be positive")
        object.__setattr__(self, "R_mant", m)
        object.__setattr__(self, "R_exp", e)
        for name in ("center_hi", "center_lo", "R_mant", "R_exp"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_arrays(cls, domain, rho, centers, radii, centers_lo=None):
        """Hand-made system from float centers and float radii."""
        centers = np.array(centers, dtype=np.float64).reshape(-1, domain.n)
        lo = np.zeros_like(centers) if centers_lo is None else np.array(centers_lo, dtype=np.float64)
        m, e = np.frexp(np.asarray(radii, dtype=np.float64))
        return cls(domain, rho, centers, lo, m, e.astype(np.int64))

    # -- sizes and radii
    @property
    def n(self) -> int:
        return self.domain.n

    def __len__(self) -> int:
        return self.center_hi.shape[0]

    @property
    def L(self) -> int:
        return len(self)

    def _check(self, k: int):
        if not 1 <= k <= len(self):
            raise IndexOutOfRange(f"ball index {k} outside 1..{len(self)}")

    @property
    def centers(self) -> np.ndarray:
        return self.center_hi + self.center_lo

    @property
    def R(self) -> np.ndarray:
        """Outer radii as float64 (underflows to 0 for very small balls)."""
        return np.ldexp(self.R_mant, self.R_exp.astype(np.int32))

    @property
    def r(self) -> np.ndarray:
        return np.ldexp(self.R_mant, (self.R_exp - 1).astype(np.int32))

    def log_R(self) -> np.ndarray:
        return np.log(self.R_mant) + self.R_exp * math.log(2.0)

    def log_r(self) -> np.ndarray:
        return self.log_R() - math.log(2.0)

    def radius_ratio(self, k: int, l: int) -> float:
        """``R_k / R_l`` evaluated without leaving the exponent range."""
        return float(np.ldexp(self.R_mant[k - 1] / self.R_mant[l - 1],
                              int(self.R_exp[k - 1] - self.R_exp[l - 1])))

    def scale(self, a: int):
        """Anchor scale as ``(mantissa, exponent)``; anchor 0 has scale 1."""
        if a == 0:
            return 0.5, 1
        self._check(a)
        return float(self.R_mant[a - 1]), int(self.R_exp[a - 1])

    def truncated(self, count: int) -> "BallSystem":
        if not 1 <= count <= len(self):
            raise IndexOutOfRange(f"truncation {count} outside 1..{len(self)}")
        return BallSystem(self.domain, self.rho, self.center_hi[:count].copy(),
                          self.center_lo[:count].copy(), self.R_mant[:count].copy(),
                          self.R_exp[:count].copy(), self.construction[:count])

    # -- relative positions
    def delta(self, a: int, k: int):
        """``x^a - x^k`` as a double-double pair (anchor 0 is the origin)."""
        self._check(k)
        if a == 0:
            return -self.center_hi[k - 1], -self.center_lo[k - 1]
        self._check(a)
        return dd.dd_sub(self.center_hi[a - 1], self.center_lo[a - 1],
                         self.center_hi[k - 1], self.center_lo[k - 1])

    def relative(self, points: "AnchoredPoints", k: int):
        """``x - x^k`` for anchored points, as a double-double pair."""
        ms, es = self.scale(points.anchor)
        ph, pl = dd.two_prod(ms, points.offsets)
        ph, pl = np.ldexp(ph, es), np.ldexp(pl, es)
        Dh, Dl = self.delta(points.anchor, k)
        return dd.dd_add(Dh, Dl, ph, pl)

    def local(self, points: "AnchoredPoints", k: int, inner: bool = True) -> np.ndarray:
        """Offsets ``(x - x^k) / r_k`` (or ``/ R_k`` with ``inner=False``)."""
        self._check(k)
        if points.anchor == k:
            return points.offsets * (2.0 if inner else 1.0)
        vh, vl = self.relative(points, k)
        e = int(self.R_exp[k - 1]) - (1 if inner else 0)
        with np.errstate(over="ignore"):
            return np.ldexp((vh + vl) / self.R_mant[k - 1], -e)

    def meeting(self, a: int, reach: float, inner: bool = True, candidates=None) -> np.ndarray:
        """1-based indices of balls ``B_k`` (or ``E_k``) meeting ``B(x^a, reach*scale_a)``.

        A cheap superset test in float64; callers refine with local coordinates.
        """
        idx = np.arange(1, len(self) + 1) if candidates is None else np.asarray(candidates)
        if idx.size == 0:
            return idx
        ms, es = self.scale(a)
        anchor = np.zeros(self.n) if a == 0 else self.centers[a - 1]
        dist = np.linalg.norm(self.centers[idx - 1] - anchor, axis=1)
        rad = self.r[idx - 1] if inner else self.R[idx - 1]
        reach_abs = math.ldexp(ms * reach, es)
        slack = 1e-9 * (rad + reach_abs) + 4e-16 * (np.linalg.norm(anchor) + 1.0)
        hit = dist < rad + reach_abs + slack
        if a != 0:
            hit |= idx == a
        return idx[hit]

    # -- serialisation
    def to_json(self) -> str:
        balls = []
        for i in range(len(self)):
            balls.append({
                "center_hi": [float(v) for v in self.center_hi[i]],
                "center_lo": [float(v) for v in self.center_lo[i]],
                "R": f"@R{i}@",
            })
        text = json.dumps({"n": self.n, "rho": self.rho, "balls": balls}, indent=1)
        for i in range(len(self)):
            text = text.replace(f'"@R{i}@"', _scaled_to_text(self.R_mant[i], self.R_exp[i]), 1)
        return text + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BallSystem":
        doc = json.loads(text, parse_float=Decimal)
        domain = Domain(int(doc["n"]))
        balls = doc["balls"]
        hi = np.array([[float(v) for v in b["center_hi"]] for b in balls], dtype=np.float64)
        lo = np.array([[float(v) for v in b["center_lo"]] for b in balls], dtype=np.float64)
        me = [_text_to_scaled(Decimal(b["R"])) for b in balls]
        mant = np.array([m for m, _ in me], dtype=np.float64)
        exp = np.array([e for _, e in me], dtype=np.int64)
        return cls(domain, float(doc["rho"]), hi.reshape(-1, domain.n), lo.reshape(-1, domain.n), mant, exp)

    def save(self, path):
        from .io import atomic_write_text

        atomic_write_text(path, self.to_json())

    @classmethod
    def load(cls, path) -> "BallSystem":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _scaled_to_text(mant, exp) -> str:
    value = math.ldexp(float(mant), int(exp))
    if value != 0.0 and abs(value) >= 2.2250738585072014e-308:
        return repr(value)
    with localcontext() as ctx:
        ctx.prec = 40
        d = Decimal(float(mant)) * Decimal(2) ** int(exp)
    return f"{d:.25e}"


def _text_to_scaled(d: Decimal):
    if d <= 0:
        raise DomainError("radii must be positive")
    with localcontext() as ctx:
        ctx.prec = 60
        e = int((d.ln() / Decimal(2).ln()).to_integral_value(rounding="ROUND_FLOOR")) + 1
        m = float(d / (Decimal(2) ** e))
    m, de = math.frexp(m)
    return m, e + de


@dataclass(frozen=True)
class AnchoredPoints:
    """Points ``x = x^a + scale_a * y`` for a batch of offsets ``y``.

    ``anchor = 0`` is the domain frame (origin, scale 1); otherwise the scale
    is the outer radius ``R_a``.
    """

    anchor: int
    offsets: np.ndarray

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.offsets, dtype=np.float64))
        object.__setattr__(self, "offsets", y)
        if self.anchor < 0:
            raise IndexOutOfRange("anchor must be >= 0")
        if self.anchor > 0 and y.size and np.max(np.einsum("ij,ij->i", y, y)) > 16.0:
            raise DomainError("offsets must satisfy |y| <= 4; re-anchor the point")

    def __len__(self) -> int:
        return self.offsets.shape[0]

    def absolute(self, system: BallSystem) -> np.ndarray:
        """Materialised positions in float64 (resolution limited by |x|)."""
        ms, es = system.scale(self.anchor)
        step = np.ldexp(ms * self.offsets, es)
        if self.anchor == 0:
            return step
        return system.centers[self.anchor - 1] + step

    def subset(self, mask) -> "AnchoredPoints":
        return AnchoredPoints(self.anchor, self.offsets[mask])


# ---------------------------------------------------------------- construction


def build_ball_system(domain: Domain, rho: float, count: int, *, search_budget: int = 4_000_000,
                      log: list | None = None) -> BallSystem:
    """Greedy construction of ``count`` balls with window disjointness.

    ``E_1`` is ``B(x^1, rho)`` when admissible. Given ``E_1..E_l`` the next
    center is the first unused dyadic point outside the closures of the
    window balls ``E_k``, ``floor(cbrt(l+1)) <= k <= l``; its radius is
    ``min(rho * R_l, d / 2)`` where ``d`` is the clearance to the boundary
    and to those balls.

    Window balls whose radius is below half the lattice spacing cannot block
    a lattice point other than their own (already used) center, and when
    ``rho * R_l <= spacing / 4`` their clearance cannot win the minimum, so
    they are skipped; the result equals the brute-force construction.
    """
    if not 0.0 < rho < 0.5:
        raise DomainError("rho must lie in (0, 1/2)")
    if count < 1:
        raise DomainError("count must be >= 1")
    n = domain.n
    enum = _DyadicEnumeration(n)
    enum.ensure(1)
    used = np.zeros(enum.points.shape[0], dtype=bool)

    centers = np.zeros((count, n))
    mant = np.zeros(count)
    exp = np.zeros(count, dtype=np.int64)
    records = []

    x1 = enum.points[0]
    clearance = 1.0 - float(np.linalg.norm(x1))
    R1 = rho if rho < clearance else clearance / 2.0
    centers[0] = x1
    m, e = math.frexp(R1)
    mant[0], exp[0] = m, e
    used[0] = True
    records.append({"k": 1, "dense_index": 1, "branch": "rho" if R1 == rho else "boundary", "clearance": clearance})

    for l in range(1, count):  # l balls exist (1-based l), place ball l+1
        lo = icbrt(l + 1)
        win = np.arange(lo - 1, l)
        while True:
            R_win = np.ldexp(mant[win], exp[win].astype(np.int32))
            h = enum.spacing
            rhoRl = math.ldexp(rho * mant[l - 1], int(exp[l - 1]))
            if rhoRl <= h / 4.0:
                sel = win[R_win * (1.0 + ADMISSION_MARGIN) >= h / 2.0]
            else:
                sel = win
            found = _first_admissible(enum.points, used, centers[sel],
                                      np.ldexp(mant[sel], exp[sel].astype(np.int32)))
            if found is not None:
                break
            if enum.points.shape[0] >= search_budget:
                raise CandidateSearchOverflow(
                    f"no admissible dense point for ball {l + 1} among {enum.points.shape[0]} candidates")
            enum.extend()
            used = np.concatenate([used, np.zeros(enum.points.shape[0] - used.size, dtype=bool)])
        idx, gap = found
        p = enum.points[idx]
        d = min(1.0 - float(np.linalg.norm(p)), gap)
        half = d / 2.0
        if not (half > 0.0 and math.isfinite(half)):
            raise PrecisionExhausted(f"clearance for ball {l + 1} is not positive ({d!r})")
        rm, re = math.frexp(rho * mant[l - 1])
        re += int(exp[l - 1])
        hm, he = math.frexp(half)
        if _scaled_less(hm, he, rm, re):
            rm, re, branch = hm, he, "gap"
        else:
            branch = "rho"
        centers[l] = p
        mant[l], exp[l] = rm, re
        used[idx] = True
        records.append({"k": l + 1, "dense_index": int(idx) + 1, "branch": branch, "clearance": d})

    system = BallSystem(domain, rho, centers, np.zeros_like(centers), mant, exp, tuple(records))
    if log is not None:
        log.extend(records)
    return system


def _first_admissible(points, used, win_centers, win_R, chunk=512):
    """First unused point strictly outside every window ball; returns (index, gap)."""
    free = np.flatnonzero(~used)
    for a in range(0, free.size, chunk):
        idx = free[a:a + chunk]
        if win_centers.shape[0] == 0:
            return int(idx[0]), math.inf
        D = np.sqrt(((points[idx, None, :] - win_centers[None, :, :]) ** 2).sum(-1))
        ok = np.all(D > win_R * (1.0 + ADMISSION_MARGIN), axis=1)
        hits = np.flatnonzero(ok)
        if hits.size:
            j = hits[0]
            return int(idx[j]), float(np.min(D[j] - win_R))
    return None


# ---------------------------------------------------------------- property checks


def check_window_disjointness(system: BallSystem, rtol: float = DISJOINT_RTOL):
    """All window pairs ``(k, l)``, ``floor(cbrt(l)) <= k < l``, whose closed balls meet."""
    R = system.R
    out = []
    for l in range(2, len(system) + 1):
        ks = np.arange(max(icbrt(l), 1), l)
        if ks.size == 0:
            continue
        dh, dl = dd.dd_sub(system.center_hi[ks - 1], system.center_lo[ks - 1],
                           system.center_hi[l - 1], system.center_lo[l - 1])
        sh, sl = dd.dd_sum_squares(dh, dl, axis=-1)
        dist = np.sqrt(sh + sl)
        bad = dist <= (R[ks - 1] + R[l - 1]) * (1.0 + rtol)
        out.extend((int(k), l) for k in ks[bad])
    return out


def check_radius_decay(system: BallSystem, rtol: float = DECAY_RTOL):
    """``(ok, worst ratio)`` for ``R_{k+1} <= rho R_k`` and ``r_1 <= rho``."""
    if len(system) < 2:
        raise InsufficientBalls("radius decay needs at least two balls")
    ratios = np.ldexp(system.R_mant[1:] / system.R_mant[:-1],
                      (system.R_exp[1:] - system.R_exp[:-1]).astype(np.int32))
    worst = float(np.max(ratios))
    r1 = float(system.r[0])
    ok = worst <= system.rho * (1.0 + rtol) and r1 <= system.rho
    return bool(ok), worst


def check_containment(system: BallSystem):
    """Indices ``k`` with ``dist(x^k, boundary) <= R_k`` (i.e. ``E_k`` not inside)."""
    sh, sl = dd.dd_sum_squares(system.center_hi, system.center_lo, axis=-1)
    nh, nl = dd.dd_sqrt(sh, sl)
    clearance = (1.0 - nh) - nl
    bad = clearance <= system.R
    return [int(k) + 1 for k in np.flatnonzero(bad)]


def tail_measure_ratio(system: BallSystem, l: int) -> float:
    """``sum_{k=l+1}^{L} |B_k| / |B_l|`` from the stored radii."""
    system._check(l)
    n = system.n
    ratios = [system.radius_ratio(k, l) ** n for k in range(l + 1, len(system) + 1)]
    return float(math.fsum(ratios))


def truncation_tail_bound(system: BallSystem, l: int) -> float:
    """Bound on ``sum_{k>L} |B_k| / |B_l|`` for the balls beyond the truncation."""
    q = system.rho ** system.n
    return system.radius_ratio(len(system), l) ** system.n * q / (1.0 - q)


def covering_radius(system: BallSystem, probes: QuadratureSpec, count: int | None = None) -> float:
    """``max_z min_k |z - x^k|`` over probe points ``z`` of the domain."""
    count = len(system) if count is None else count
    z = uniform_ball(probes, system.n, (STREAM_COVERING,))
    dist, _ = cKDTree(system.centers[:count]).query(z)
    return float(np.max(dist))


# ---------------------------------------------------------------- regions


def in_good_region(z: np.ndarray, epsilon: float) -> np.ndarray:
    """G-membership for offsets ``z = (x - x^l) / r_l``."""
    t = np.sqrt(np.einsum("ij,ij->i", z, z))
    return ((t < 1.0) & (np.abs(z[:, 0]) >= epsilon) & (np.abs(z[:, 1]) >= epsilon)
            & (t <= 1.0 - epsilon))


def _inside(z) -> np.ndarray:
    return np.einsum("ij,ij->i", z, z) < 1.0


def covered_by(system: BallSystem, points: AnchoredPoints, ks) -> np.ndarray:
    """Mask of points lying in some inner ball ``B_k``, ``k`` in ``ks``."""
    mask = np.zeros(len(points), dtype=bool)
    if len(points) == 0:
        return mask
    ymax = float(np.sqrt(np.max(np.einsum("ij,ij->i", points.offsets, points.offsets))))
    for k in system.meeting(points.anchor, ymax, inner=True, candidates=np.asarray(ks, dtype=np.int64)):
        mask |= _inside(system.local(points, int(k)))
    return mask


def region_membership(system: BallSystem, params: RegionParams | None, l: int,
                      points: AnchoredPoints, region: str) -> np.ndarray:
    """Membership of anchored points in ``E_l``, ``B_l``, ``G_l``, ``M_l`` or
    ``background`` (``E_l`` minus ``B_k`` for all ``k >= l``).

    ``M_l`` is truncated at the system size ``L``.
    """
    system._check(l)
    if region not in REGIONS:
        raise DomainError(f"unknown region {region!r}")
    if region == "E":
        return _inside(system.local(points, l, inner=False))
    z = system.local(points, l)
    if region == "B":
        return _inside(z)
    if region == "background":
        inE = _inside(system.local(points, l, inner=False))
        return inE & ~covered_by(system, points, np.arange(l, len(system) + 1))
    if params is None:
        raise DomainError("region parameters are required for G and M")
    good = in_good_region(z, params.epsilon)
    if region == "G":
        return good
    return good & ~covered_by(system, points, np.arange(l + 1, len(system) + 1))


def reference_points(system: BallSystem, l: int, reference: str, spec: QuadratureSpec,
                     stream=(), start=0, stop=None) -> AnchoredPoints:
    """Uniform samples of ``E_l`` (``"E"``) or ``B_l`` (``"B"``), anchored at ``l``."""
    y = uniform_ball(spec, system.n, stream, start, stop)
    if reference == "B":
        y = 0.5 * y
    elif reference != "E":
        raise DomainError("reference must be 'E' or 'B'")
    return AnchoredPoints(l, y)


def calibrate_epsilon(domain: Domain, quadrature: QuadratureSpec) -> RegionParams:
    """Largest ``epsilon`` on 0.01..0.40 with ``|G|/|B| >= 2/3 + 3 se``.

    The defining inequalities of G are scale invariant, so one reference ball
    suffices.
    """
    z = uniform_ball(quadrature, domain.n, (STREAM_CALIBRATE,))
    for i in range(40, 0, -1):
        eps = i / 100.0
        f, se = fraction_and_se(in_good_region(z, eps))
        if f >= 2.0 / 3.0 + 3.0 * se:
            return RegionParams(eps)
    raise CalibrationFailed("no epsilon on the grid reaches the 2/3 measure bound")


def estimate_region_fraction(system: BallSystem, params: RegionParams | None, l: int, region: str,
                             quadrature: QuadratureSpec, reference: str | None = None) -> RegionReport:
    """Monte Carlo fraction of the reference ball (``B_l`` or ``E_l``) in a region."""
    system._check(l)
    if reference is None:
        reference = "E" if region in ("E", "background") else "B"
    pts = reference_points(system, l, reference, quadrature, (STREAM_REGION, l))
    f, se = fraction_and_se(region_membership(system, params, l, pts, region))
    tail = truncation_tail_bound(system, l) if region == "M" else 0.0
    return RegionReport(region, l, f, se, quadrature.n_samples, reference, tail)
