"""Closed-form jets of the bump fields, the boundary lift and their sum.

Index conventions: ``gradient[..., i, j] = d_j u_i`` and
``hessian[..., i, j, k] = d_j d_k u_i``. All evaluators are batched over
:class:`~apblow.geometry.AnchoredPoints`.

Bump ``k`` is evaluated in the local coordinate ``z = (x - x^k) / r_k``,
``t = |z|``. With ``phi = (1 - t)**2 / 2`` and ``c = 1 - 1/t``::

    u_1 =  k r z_2 phi            u_2 = -k r z_1 phi
    d_i u_1 =  k (delta_2i phi + z_2 z_i c)
    d_i u_2 = -k (delta_1i phi + z_1 z_i c)

so gradients are scale free while values carry ``r_k`` and Hessians carry
``1 / r_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import DomainError, IndexOutOfRange
from .geometry import AnchoredPoints, BallSystem

FLAG_CENTER = 1
FLAG_SPHERE = 2
DEFAULT_ETA = 1e-6


@dataclass
class Jet:
    """Value, gradient and (optionally) Hessian of a vector field on a batch."""

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray | None
    flags: np.ndarray

    @classmethod
    def zeros(cls, m: int, n: int, order: int = 2) -> "Jet":
        return cls(np.zeros((m, n)), np.zeros((m, n, n)),
                   np.zeros((m, n, n, n)) if order >= 2 else None,
                   np.zeros(m, dtype=np.uint8))

    @property
    def n(self) -> int:
        return self.value.shape[1]

    def __len__(self) -> int:
        return self.value.shape[0]

    @property
    def smooth(self) -> np.ndarray:
        return self.flags == 0

    def add_at(self, idx, other: "Jet"):
        self.value[idx] += other.value
        self.gradient[idx] += other.gradient
        if self.hessian is not None:
            self.hessian[idx] += other.hessian
        self.flags[idx] |= other.flags

    def __add__(self, other: "Jet") -> "Jet":
        hess = None
        if self.hessian is not None and other.hessian is not None:
            hess = self.hessian + other.hessian
        return Jet(self.value + other.value, self.gradient + other.gradient, hess,
                   self.flags | other.flags)

    def at(self, i: int) -> "Jet":
        return Jet(self.value[i:i + 1], self.gradient[i:i + 1],
                   None if self.hessian is None else self.hessian[i:i + 1], self.flags[i:i + 1])

    def to_dict(self, i: int = 0) -> dict:
        out = {"value": self.value[i].tolist(), "gradient": self.gradient[i].tolist(),
               "flags": int(self.flags[i])}
        if self.hessian is not None:
            out["hessian"] = self.hessian[i].tolist()
        return out


@dataclass
class SymGrad:
    D: np.ndarray
    magnitude: np.ndarray


# ---------------------------------------------------------------- bump jets


def bump_local_jet(z: np.ndarray, k: int, order: int = 2, eta: float = DEFAULT_ETA):
    """Jet of bump ``k`` in units of its own radius.

    Returns ``(V, G, H, flags)`` with ``u = r V``, ``grad u = G`` and
    ``hess u = H / r``. Points with ``t > 1`` get zeros. At ``t = 0`` the
    gradient keeps only the ``phi(0) = 1/2`` terms and the Hessian is zero
    with the center flag set.
    """
    z = np.atleast_2d(z)
    m, n = z.shape
    t = np.sqrt(np.einsum("ij,ij->i", z, z))
    inside = t <= 1.0
    z = np.where(inside[:, None], z, 0.0)
    t = np.where(inside, t, 0.0)
    pos = t > 0.0
    tt = np.where(pos, t, 1.0)
    c = np.where(pos, 1.0 - 1.0 / tt, 0.0)
    u = z / tt[:, None]
    phi = np.where(inside, 0.5 * (1.0 - t) ** 2, 0.0)

    V = np.zeros((m, n))
    V[:, 0] = k * (z[:, 1] * phi)
    V[:, 1] = -(k * (z[:, 0] * phi))

    zz = z[:, :, None] * z[:, None, :]
    G = np.zeros((m, n, n))
    G[:, 0, :] = k * (zz[:, 1, :] * c[:, None])
    G[:, 1, :] = -(k * (zz[:, 0, :] * c[:, None]))
    G[:, 0, 1] += k * phi
    G[:, 1, 0] -= k * phi

    H = None
    if order >= 2:
        zc = z - u  # z * c, stable near the center
        uu = u[:, :, None] * u[:, None, :]
        eye = np.eye(n)
        H = np.zeros((m, n, n, n))
        for comp, axis, sign in ((0, 1, 1.0), (1, 0, -1.0)):
            br = np.zeros((m, n, n))
            br[:, axis, :] += zc
            br[:, :, axis] += zc
            br += eye[None] * zc[:, axis, None, None]
            br += u[:, axis, None, None] * uu
            H[:, comp] = sign * (k * br)
        H[~pos] = 0.0

    flags = np.zeros(m, dtype=np.uint8)
    flags[inside & (t < eta)] |= FLAG_CENTER
    flags[inside & (t > 1.0 - eta)] |= FLAG_SPHERE
    return V, G, H, flags


def _scale_jet(V, G, H, flags, mant, exp) -> Jet:
    # r = mant * 2**(exp - 1)
    e = int(exp) - 1
    value = np.ldexp(V * mant, e)
    hess = None
    if H is not None:
        with np.errstate(over="ignore"):
            hess = np.ldexp(H / mant, -e)
    return Jet(value, G, hess, flags)


def eval_bump_jet(system: BallSystem, k: int, points: AnchoredPoints, order: int = 2,
                  eta: float = DEFAULT_ETA) -> Jet:
    """Jet of the bump field ``u^k`` at anchored points (zero outside ``B_k``).

    Hessians overflow to ``inf`` once ``k / r_k`` leaves the float64 range.
    """
    if not 1 <= k <= len(system):
        raise IndexOutOfRange(f"ball index {k} outside 1..{len(system)}")
    z = system.local(points, k)
    V, G, H, flags = bump_local_jet(z, k, order, eta)
    return _scale_jet(V, G, H, flags, system.R_mant[k - 1], system.R_exp[k - 1])


# ---------------------------------------------------------------- lift


def eval_lift_jet(c_w: float, x: np.ndarray, order: int = 2) -> Jet:
    """Jet of ``w(x) = c_w (1 - |x|^2) (-x_2, x_1, 0, ..., 0)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    m, n = x.shape
    s = 1.0 - np.einsum("ij,ij->i", x, x)
    x1, x2 = x[:, 0], x[:, 1]
    V = np.zeros((m, n))
    V[:, 0] = -c_w * s * x2
    V[:, 1] = c_w * s * x1
    G = np.zeros((m, n, n))
    G[:, 0, :] = c_w * (2.0 * x * x2[:, None])
    G[:, 1, :] = -(c_w * (2.0 * x * x1[:, None]))
    G[:, 0, 1] -= c_w * s
    G[:, 1, 0] += c_w * s
    H = None
    if order >= 2:
        eye = np.eye(n)
        H = np.zeros((m, n, n, n))
        for comp, axis, sign in ((0, 1, 1.0), (1, 0, -1.0)):
            br = eye[None] * x[:, axis, None, None]
            br[:, axis, :] += x
            br[:, :, axis] += x
            H[:, comp] = sign * 2.0 * c_w * br
    return Jet(V, G, H, np.zeros(m, dtype=np.uint8))


def lift_gradient_sup(n: int, samples: int = 1 << 16) -> float:
    """Dense-sampling estimate of ``sup |grad w~|`` (Frobenius) over the closed ball, ``c_w = 1``."""
    u = qmc.Sobol(n + 1, scramble=True, seed=12345).random(samples)
    from .sampling import cube_to_ball

    inner = cube_to_ball(np.clip(u, 2.0**-60, 1 - 2.0**-53))
    sphere = inner / np.linalg.norm(inner, axis=1, keepdims=True)
    pts = np.concatenate([inner, sphere, np.zeros((1, n))])
    G = eval_lift_jet(1.0, pts, order=1).gradient
    return float(np.max(np.sqrt(np.einsum("mij,mij->m", G, G))))


def auto_lift_scale(n: int) -> float:
    """``c_w`` with a 1 % safety margin so that ``sup |grad w| <= 1``."""
    return 1.0 / (1.01 * lift_gradient_sup(n))


# ---------------------------------------------------------------- full field


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """Truncated field ``u = sum_{k <= L} u^k + w`` on a ball system."""

    system: BallSystem
    truncation: int
    c_w: float
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not 1 <= self.truncation <= len(self.system):
            raise DomainError("truncation must lie in 1..L")
        if self.c_w <= 0:
            raise DomainError("c_w must be positive")

    @classmethod
    def create(cls, system: BallSystem, truncation: int | None = None, c_w="auto",
               eta: float = DEFAULT_ETA) -> "FieldConfig":
        if c_w == "auto" or c_w is None:
            c_w = auto_lift_scale(system.n)
        return cls(system, len(system) if truncation is None else int(truncation), float(c_w), eta)

    @property
    def n(self) -> int:
        return self.system.n


def _as_points(points) -> AnchoredPoints:
    if isinstance(points, AnchoredPoints):
        return points
    return AnchoredPoints(0, np.atleast_2d(np.asarray(points, dtype=np.float64)))


def _contributions(config: FieldConfig, points: AnchoredPoints):
    """Yield ``(k, point indices)`` for every bump whose closed ball holds some point."""
    system = config.system
    L = config.truncation
    m = len(points)
    if m == 0:
        return
    if points.anchor == 0:
        x = points.absolute(system)
        tree = cKDTree(x)
        r = system.r[:L]
        hits = tree.query_ball_point(system.centers[:L], r * (1.0 + 1e-12))
        for k0, idx in enumerate(hits):
            if idx:
                yield k0 + 1, np.sort(np.asarray(idx, dtype=np.intp))
        return
    ymax = float(np.sqrt(np.max(np.einsum("ij,ij->i", points.offsets, points.offsets))))
    for k in system.meeting(points.anchor, ymax, inner=True, candidates=np.arange(1, L + 1)):
        yield int(k), None


def eval_field_jet(config: FieldConfig, points, order: int = 2, bumps_only: bool = False,
                   exclude=()) -> Jet:
    """Jet of ``sum_{k <= L} u^k (+ w)`` at the given points.

    ``exclude`` lists bump indices to leave out (used by decomposition checks).
    """
    points = _as_points(points)
    system = config.system
    jet = Jet.zeros(len(points), system.n, order)
    for k, idx in _contributions(config, points):
        if k in exclude:
            continue
        sub = points if idx is None else points.subset(idx)
        z = system.local(sub, k)
        inside = np.einsum("ij,ij->i", z, z) <= 1.0
        if not np.any(inside):
            continue
        sel = np.flatnonzero(inside)
        V, G, H, flags = bump_local_jet(z[sel], k, order, config.eta)
        part = _scale_jet(V, G, H, flags, system.R_mant[k - 1], system.R_exp[k - 1])
        jet.add_at(sel if idx is None else idx[sel], part)
    if not bumps_only:
        lift = eval_lift_jet(config.c_w, points.absolute(system), order)
        jet.value += lift.value
        jet.gradient += lift.gradient
        if order >= 2:
            jet.hessian += lift.hessian
    return jet


# ---------------------------------------------------------------- derived objects


def sym_gradient(jet_or_grad) -> SymGrad:
    """``D = (G + G^T) / 2`` and its Frobenius norm."""
    G = jet_or_grad.gradient if isinstance(jet_or_grad, Jet) else np.asarray(jet_or_grad, dtype=np.float64)
    if G.ndim == 2:
        G = G[None]
    D = 0.5 * (G + np.swapaxes(G, -1, -2))
    return SymGrad(D, np.sqrt(np.einsum("mij,mij->m", D, D)))


def divergence(jet_or_grad) -> np.ndarray:
    G = jet_or_grad.gradient if isinstance(jet_or_grad, Jet) else np.asarray(jet_or_grad, dtype=np.float64)
    return np.trace(G, axis1=-2, axis2=-1)


def frobenius(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))


def weight_from_magnitude(mag, p: float) -> np.ndarray:
    return (1.0 + np.asarray(mag, dtype=np.float64)) ** (p - 2.0)


def weight_value(config: FieldConfig, p: float, points) -> np.ndarray:
    """``(1 + |Du|)^(p-2)`` at the points."""
    if not p > 1.0:
        raise DomainError("p must exceed 1")
    jet = eval_field_jet(config, points, order=1)
    return weight_from_magnitude(sym_gradient(jet).magnitude, p)


def f_transform(D, p: float) -> np.ndarray:
    """``F(D) = (1 + |D|)^((p-2)/2) D`` for one matrix or a batch."""
    if not p > 1.0:
        raise DomainError("p must exceed 1")
    if isinstance(D, SymGrad):
        mat, mag = D.D, D.magnitude
    else:
        mat = np.asarray(D, dtype=np.float64)
        mag = np.sqrt(np.sum(mat * mat, axis=(-2, -1)))
    factor = (1.0 + np.asarray(mag)) ** (0.5 * (p - 2.0))
    return mat * np.asarray(factor)[..., None, None]


def hessian_from_symgrad_derivatives(hessian: np.ndarray) -> np.ndarray:
    """Rebuild ``d_j d_k v_i`` from derivatives of ``D v`` only.

    ``d_j d_k v_i = d_j D_ik + d_k D_ij - d_i D_jk`` where
    ``d_j D_ik = (d_j d_k v_i + d_j d_i v_k) / 2``.
    """
    H = np.asarray(hessian)
    # dD[..., a, b, c] = d_c D_ab
    dD = 0.5 * (H + np.swapaxes(H, -3, -2))
    # d_j D_ik -> dD[i,k,j]; d_k D_ij -> dD[i,j,k]; d_i D_jk -> dD[j,k,i]
    term1 = np.swapaxes(dD, -1, -2)               # [i, j, k] = dD[i, k, j]
    term2 = dD                                    # [i, j, k] = dD[i, j, k]
    term3 = np.moveaxis(dD, -1, -3)               # [i, j, k] = dD[j, k, i]
    return term1 + term2 - term3


def smooth_margin_ok(config: FieldConfig, points, margin: float) -> np.ndarray:
    """True where every bump ball keeps the point at relative distance
    ``>= margin`` from its center and from its sphere."""
    points = _as_points(points)
    ok = np.ones(len(points), dtype=bool)
    system = config.system
    ymax = float(np.sqrt(np.max(np.einsum("ij,ij->i", points.offsets, points.offsets)))) if len(points) else 0.0
    cand = (system.meeting(points.anchor, ymax * (1 + margin) + margin, inner=True,
                           candidates=np.arange(1, config.truncation + 1)))
    for k in cand:
        z = system.local(points, int(k))
        t = np.sqrt(np.einsum("ij,ij->i", z, z))
        ok &= (t >= margin) & (np.abs(t - 1.0) >= margin)
    return ok


def lift_normal_derivative(c_w: float, x: np.ndarray) -> np.ndarray:
    """``d_nu w`` on the unit sphere: ``-2 c_w (-x_2, x_1, 0, ...)``."""
    x = np.atleast_2d(x)
    G = eval_lift_jet(c_w, x, order=1).gradient
    nu = x / np.linalg.norm(x, axis=1, keepdims=True)
    return np.einsum("mij,mj->mi", G, nu)


def sup_lift_gradient(c_w: float, n: int) -> float:
    return c_w * lift_gradient_sup(n)


__all__ = [
    "Jet", "SymGrad", "FieldConfig", "bump_local_jet", "eval_bump_jet", "eval_lift_jet",
    "eval_field_jet", "sym_gradient", "divergence", "weight_value", "f_transform",
    "auto_lift_scale", "hessian_from_symgrad_derivatives", "smooth_margin_ok",
    "lift_normal_derivative", "frobenius", "weight_from_magnitude",
]
