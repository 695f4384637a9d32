import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apblow.errors import IndexOutOfRange
from apblow.field import (
    FLAG_CENTER,
    FLAG_SPHERE,
    FieldConfig,
    bump_local_jet,
    divergence,
    eval_bump_jet,
    eval_field_jet,
    eval_lift_jet,
    f_transform,
    frobenius,
    hessian_from_symgrad_derivatives,
    lift_normal_derivative,
    smooth_margin_ok,
    sup_lift_gradient,
    sym_gradient,
    weight_from_magnitude,
    weight_value,
)
from apblow.geometry import AnchoredPoints, BallSystem, Domain


def _symbolic_bump(n, k, r):
    """Closed-form bump as sympy expressions of absolute x (center 0)."""
    xs = sp.symbols(f"x0:{n}", real=True)
    t = sp.sqrt(sum(v**2 for v in xs))
    # bracket r/2 (1 - |x|/r)^2 written out
    phi = t**2 / (2 * r) - t + r / 2
    u = [sp.Integer(0)] * n
    u[0] = k / r * xs[1] * phi
    u[1] = -k / r * xs[0] * phi
    return xs, u


@pytest.mark.parametrize("n", [2, 3])
def test_bump_jet_matches_symbolic_derivatives(n):
    k, r = 3, sp.Rational(1, 4)
    xs, u = _symbolic_bump(n, k, r)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.2, 0.2, (6, n))
    pts = pts[np.linalg.norm(pts, axis=1) < 0.24]
    z = pts / 0.25
    V, G, H, _ = bump_local_jet(z, k)
    for m, x in enumerate(pts):
        subs = dict(zip(xs, [sp.Float(v, 30) for v in x]))
        for i in range(n):
            assert float(u[i].subs(subs)) == pytest.approx(0.25 * V[m, i], abs=1e-14)
            for j in range(n):
                dij = sp.diff(u[i], xs[j])
                assert float(dij.subs(subs)) == pytest.approx(G[m, i, j], abs=1e-13)
                for l in range(n):
                    assert float(sp.diff(dij, xs[l]).subs(subs)) == pytest.approx(H[m, i, j, l] / 0.25, abs=1e-11)


def test_bump_hand_example():
    V, G, H, flags = bump_local_jet(np.array([[0.3, 0.4]]), 1)
    assert np.allclose(V[0], [0.05, -0.0375], atol=1e-15)
    assert G[0, 0, 0] == pytest.approx(-0.12)
    assert G[0, 1, 1] == pytest.approx(0.12)
    assert flags[0] == 0


def test_bump_on_hand_made_system():
    s = BallSystem.from_arrays(Domain(2), 0.49, [[0.0, 0.0]], [0.5])
    pts = AnchoredPoints(0, np.array([[0.075, 0.1]]))  # z = (0.3, 0.4) with r = 0.25
    jet = eval_bump_jet(s, 1, pts)
    assert np.allclose(jet.value[0], 0.25 * np.array([0.05, -0.0375]), atol=1e-15)
    assert jet.gradient[0, 0, 0] == pytest.approx(-0.12)
    with pytest.raises(IndexOutOfRange):
        eval_bump_jet(s, 2, pts)


def test_bump_vanishes_outside_and_on_sphere():
    z = np.array([[1.0, 0.0], [0.6, 0.8], [1.2, 0.3], [0.0, -3.0]])
    V, G, H, flags = bump_local_jet(z, 7)
    assert np.all(V == 0) and np.all(G == 0)
    assert flags[0] & FLAG_SPHERE and flags[1] & FLAG_SPHERE
    assert np.all(H[2:] == 0)


def test_gradient_continuous_hessian_jumps_across_sphere():
    d = np.array([0.6, 0.8])
    inside = bump_local_jet(np.array([d * (1 - 1e-7)]), 4)
    outside = bump_local_jet(np.array([d * (1 + 1e-7)]), 4)
    assert np.max(np.abs(inside[1] - outside[1])) < 1e-5
    assert np.max(np.abs(inside[2])) > 1.0 and np.all(outside[2] == 0)


def test_center_is_flagged():
    V, G, H, flags = bump_local_jet(np.zeros((1, 2)), 2)
    assert flags[0] & FLAG_CENTER
    assert G[0, 0, 1] == pytest.approx(1.0) and G[0, 1, 0] == pytest.approx(-1.0)


@settings(max_examples=100)
@given(arrays(np.float64, (2,), elements=st.floats(-0.99, 0.99)), st.integers(1, 1000))
def test_bump_estimates_hold(z, k):
    V, G, H, _ = bump_local_jet(z[None], k)
    assert np.max(np.abs(V)) <= k * (1 + 1e-12)
    assert np.max(np.abs(G)) <= 2 * k * (1 + 1e-12)
    assert np.max(np.abs(H)) <= 4 * k * (1 + 1e-12)
    assert abs(np.trace(G[0])) <= 1e-12 * (1 + np.max(np.abs(G)))


def test_value_bound_peak():
    # |u|/(k r) peaks at t = 1/3 with value 2/27
    t = np.linspace(0, 1, 3001)
    z = np.stack([t, np.zeros_like(t)], axis=1)
    V = bump_local_jet(z, 1)[0]
    assert np.max(np.abs(V)) == pytest.approx(2 / 27, rel=1e-6)


def test_lift_examples():
    c = 0.4
    jet = eval_lift_jet(c, np.zeros((1, 2)))
    assert np.all(jet.value == 0)
    assert jet.gradient[0, 1, 0] == c and jet.gradient[0, 0, 1] == -c
    jet = eval_lift_jet(c, np.array([[0.5, 0.0]]))
    assert np.allclose(jet.value[0], [0.0, 0.375 * c])
    x = np.random.default_rng(0).uniform(-0.7, 0.7, (100, 3))
    assert np.max(np.abs(divergence(eval_lift_jet(c, x)))) < 1e-15


def test_lift_gradient_below_one(config2, config3):
    for cfg in (config2, config3):
        assert sup_lift_gradient(cfg.c_w, cfg.n) <= 1.0
    x = np.random.default_rng(1).normal(size=(2000, 2))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= np.random.default_rng(2).uniform(0, 1, (2000, 1)) ** 0.5
    G = eval_lift_jet(config2.c_w, x, 1).gradient
    assert np.max(frobenius(G)) <= 1.0


def test_lift_normal_derivative_on_sphere():
    x = np.array([[0.6, 0.8], [1.0, 0.0]])
    dn = lift_normal_derivative(0.5, x)
    assert np.allclose(dn, -2 * 0.5 * np.stack([-x[:, 1], x[:, 0]], axis=1))


def test_field_outside_balls_is_lift(config2):
    x = np.array([[0.9, 0.05]])
    covered = any(np.linalg.norm(x[0] - c) < r for c, r in zip(config2.system.centers, config2.system.r))
    assert not covered
    jet = eval_field_jet(config2, x)
    lift = eval_lift_jet(config2.c_w, x)
    assert np.array_equal(jet.gradient, lift.gradient) and np.array_equal(jet.value, lift.value)


def test_field_divergence_free(config2):
    rng = np.random.default_rng(3)
    for anchor in (0, 3, 100, 999):
        y = rng.uniform(-1, 1, (3000, 2)) * (0.98 if anchor == 0 else 1.0)
        y = y[np.linalg.norm(y, axis=1) < 1]
        jet = eval_field_jet(config2, AnchoredPoints(anchor, y), order=1)
        assert np.max(np.abs(divergence(jet)) / (1 + frobenius(jet.gradient))) <= 1e-12


def test_symgrad_examples():
    A = np.array([[0.0, 2.0], [-2.0, 0.0]])
    assert np.all(sym_gradient(A).D == 0)
    S = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert np.array_equal(sym_gradient(S).D[0], S)
    a = 1.7
    sg = sym_gradient(np.array([[0.0, a], [0.0, 0.0]]))
    assert np.allclose(sg.D[0], [[0, a / 2], [a / 2, 0]])
    assert sg.magnitude[0] == pytest.approx(a / math.sqrt(2))


def test_divergence_of_identity():
    assert divergence(np.eye(3)[None])[0] == 3.0


def test_weight_examples(config2):
    assert weight_from_magnitude(3.0, 3.0) == 4.0
    assert weight_from_magnitude(3.0, 1.5) == 0.5
    w = weight_value(config2, 2.0, np.array([[0.1, 0.2], [0.01, 0.5]]))
    assert np.all(w == 1.0)


@given(arrays(np.float64, (3, 3), elements=st.floats(-50, 50)), st.floats(1.05, 6.0))
def test_f_transform_norm(M, p):
    D = 0.5 * (M + M.T)
    F = f_transform(D, p)
    d = np.linalg.norm(D)
    assert np.sum(F * F) == pytest.approx((1 + d) ** (p - 2) * d * d, rel=1e-12, abs=1e-300)


def test_f_transform_trivial_cases():
    assert np.all(f_transform(np.zeros((2, 2)), 3.0) == 0)
    D = np.array([[1.0, 0.5], [0.5, -1.0]])
    assert np.array_equal(f_transform(D, 2.0), D)


def test_hessian_rebuilt_from_symgrad(config2):
    rng = np.random.default_rng(4)
    y = rng.uniform(-0.45, 0.45, (500, 2))
    jet = eval_field_jet(config2, AnchoredPoints(20, y))
    H = jet.hessian
    ok = jet.flags == 0
    err = np.max(np.abs(hessian_from_symgrad_derivatives(H[ok]) - H[ok]))
    assert err <= 1e-12 * np.max(np.abs(H[ok]))


def test_hessian_symmetric(config2):
    y = np.random.default_rng(6).uniform(-0.45, 0.45, (300, 2))
    H = eval_field_jet(config2, AnchoredPoints(7, y)).hessian
    assert np.allclose(H, np.swapaxes(H, -1, -2), rtol=0, atol=1e-12 * np.max(np.abs(H)))


def test_smooth_margin(config2):
    s = config2.system
    on_sphere = AnchoredPoints(12, np.array([[0.5, 0.0], [0.0, 0.0], [0.3, 0.0]]))
    assert list(smooth_margin_ok(config2, on_sphere, 1e-6)) == [False, False, True]
    assert s.local(on_sphere, 12)[0, 0] == 1.0


def test_deep_bump_gradient_is_scale_free(config2):
    pts = AnchoredPoints(998, np.array([[0.1, 0.2]]))
    jet = eval_bump_jet(config2.system, 998, pts)
    ref = bump_local_jet(np.array([[0.2, 0.4]]), 998)[1]
    assert np.array_equal(jet.gradient, ref)
