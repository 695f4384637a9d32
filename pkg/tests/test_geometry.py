import itertools
import json
import math

import numpy as np
import pytest

from apblow.errors import DomainError, IndexOutOfRange, InsufficientBalls, PrecisionExhausted
from apblow.geometry import (
    AnchoredPoints,
    BallSystem,
    Domain,
    RegionParams,
    build_ball_system,
    calibrate_epsilon,
    check_containment,
    check_radius_decay,
    check_window_disjointness,
    covering_radius,
    dense_sequence,
    estimate_region_fraction,
    icbrt,
    in_good_region,
    region_membership,
    tail_measure_ratio,
)
from apblow.sampling import QuadratureSpec


# ---------------------------------------------------------------- dense sequence


def test_dense_sequence_first_points():
    d = Domain(2)
    assert np.array_equal(dense_sequence(d, 1), [0.0, 0.0])
    assert np.array_equal(dense_sequence(d, 2), [-0.5, -0.5])


def test_dense_sequence_stays_inside_and_never_repeats():
    d = Domain(2)
    pts = np.array([dense_sequence(d, i) for i in range(1, 400)])
    assert np.all(np.linalg.norm(pts, axis=1) < 1.0)
    assert len({tuple(p) for p in pts}) == len(pts)


def test_icbrt():
    assert [icbrt(i) for i in (1, 7, 8, 26, 27, 999, 1000)] == [1, 1, 2, 2, 3, 9, 10]
    assert icbrt(10**18) == 10**6 and icbrt(10**18 - 1) == 10**6 - 1


def test_domain_needs_two_dimensions():
    with pytest.raises(DomainError):
        Domain(1)


# ---------------------------------------------------------------- builder


def _oracle_levels(n):
    """Independent dyadic enumeration: level m lists 2^-m Z^n in the open ball,
    lexicographically, without points of coarser levels."""
    m = 0
    while True:
        side = 2**m
        pts = []
        for idx in itertools.product(range(-side + 1, side), repeat=n):
            if sum(i * i for i in idx) >= side * side:
                continue
            if m > 0 and all(i % 2 == 0 for i in idx):
                continue
            pts.append(idx)
        yield np.array(pts, dtype=float) / side
        m += 1


def brute_force_build(n, rho, count):
    """Greedy construction checking every window ball for every candidate."""
    levels = _oracle_levels(n)
    seq = next(levels)
    used = set()
    centers, radii = [], []
    x1 = seq[0]
    R1 = rho if rho < 1 - np.linalg.norm(x1) else (1 - np.linalg.norm(x1)) / 2
    centers.append(x1)
    radii.append(R1)
    used.add(0)
    for l in range(1, count):
        win = range(icbrt(l + 1) - 1, l)
        C = np.array([centers[k] for k in win])
        R = np.array([radii[k] for k in win])
        i = 0
        while True:
            if i >= len(seq):
                seq = np.concatenate([seq, next(levels)])
            if i not in used:
                D = np.linalg.norm(C - seq[i], axis=1)
                if np.all(D > R * (1 + 1e-9)):
                    break
            i += 1
        p = seq[i]
        gap = np.min(D - R)
        d = min(1 - np.linalg.norm(p), gap)
        centers.append(p)
        radii.append(min(rho * radii[-1], d / 2))
        used.add(i)
    return np.array(centers), np.array(radii)


@pytest.mark.parametrize("n,rho,count", [(2, 0.49, 300), (2, 0.3, 120), (3, 0.49, 150)])
def test_builder_matches_brute_force(n, rho, count):
    system = build_ball_system(Domain(n), rho, count)
    C, R = brute_force_build(n, rho, count)
    assert np.array_equal(system.centers, C)
    assert np.allclose(system.R, R, rtol=1e-15, atol=0)


def test_first_ball():
    system = build_ball_system(Domain(2), 0.49, 1)
    assert np.array_equal(system.centers[0], [0.0, 0.0])
    assert system.R[0] == 0.49 and system.r[0] == 0.245


def test_thousand_balls_without_precision_error(system2):
    assert len(system2) == 1000
    log_R = system2.log_R()
    # R_1000 <= rho^999 R_1; the value sits below the 1e-300 range of plain floats
    assert log_R[-1] <= 999 * math.log(0.49) + log_R[0] + 1e-9
    assert log_R[-1] < math.log(1e-300)
    assert np.all(np.isfinite(log_R))
    assert np.all(np.diff(log_R) <= math.log(0.49) + 1e-12)


def test_built_system_properties(system2):
    assert check_window_disjointness(system2) == []
    ok, worst = check_radius_decay(system2)
    assert ok and worst <= 0.49 * (1 + 1e-12)
    assert check_containment(system2) == []


def test_every_new_ball_avoids_its_window(system2):
    C, R = system2.centers, system2.R
    for l in range(1, 200):
        for k in range(icbrt(l + 1), l + 1):
            assert np.linalg.norm(C[l] - C[k - 1]) > R[l] + R[k - 1]


def test_builder_rejects_bad_rho():
    with pytest.raises(DomainError):
        build_ball_system(Domain(2), 0.6, 10)
    with pytest.raises(DomainError):
        build_ball_system(Domain(2), 0.5, 10)


def test_precision_exhausted_is_an_error_type():
    assert issubclass(PrecisionExhausted, Exception)


def test_construction_log(system2):
    rec = system2.construction
    assert len(rec) == 1000 and rec[0]["dense_index"] == 1
    assert {r["branch"] for r in rec} <= {"rho", "gap", "boundary"}


# ---------------------------------------------------------------- checks on hand-made systems


def test_identical_balls_reported():
    s = BallSystem.from_arrays(Domain(2), 0.49, [[0.1, 0.1], [0.1, 0.1]], [0.2, 0.098])
    assert (1, 2) in check_window_disjointness(s)


def test_unconstrained_pair_never_reported():
    # (1, 9): floor(cbrt 9) = 2 > 1 so E_1 and E_9 may overlap
    centers = [[0.0, 0.0]] + [[0.5 * math.cos(a), 0.5 * math.sin(a)] for a in np.linspace(0, 6, 7)] + [[0.0, 0.0]]
    radii = [0.2 * 0.3**k for k in range(9)]
    s = BallSystem.from_arrays(Domain(2), 0.49, centers, radii)
    assert (1, 9) not in check_window_disjointness(s)


def test_equal_radii_fail_decay():
    s = BallSystem.from_arrays(Domain(2), 0.49, [[0, 0], [0.5, 0.5]], [0.1, 0.1])
    ok, worst = check_radius_decay(s)
    assert not ok and worst == 1.0


def test_single_ball_decay_rejected():
    s = BallSystem.from_arrays(Domain(2), 0.49, [[0, 0]], [0.1])
    with pytest.raises(InsufficientBalls):
        check_radius_decay(s)


def test_containment_detects_escape():
    s = BallSystem.from_arrays(Domain(2), 0.49, [[0.0, 0.0], [0.95, 0.0]], [0.2, 0.098])
    assert check_containment(s) == [2]


# ---------------------------------------------------------------- serialisation


def test_json_round_trip_is_exact(system2, tmp_path):
    path = tmp_path / "s.json"
    system2.save(path)
    back = BallSystem.load(path)
    assert np.array_equal(back.center_hi, system2.center_hi)
    assert np.array_equal(back.R_mant, system2.R_mant)
    assert np.array_equal(back.R_exp, system2.R_exp)
    assert back.rho == system2.rho
    assert path.read_text() == back.to_json()


def test_json_keeps_radii_below_float_range(system2):
    from decimal import Decimal

    doc = json.loads(system2.to_json(), parse_float=Decimal)
    R_last = doc["balls"][-1]["R"]
    assert isinstance(R_last, Decimal) and R_last > 0
    assert float(R_last.log10()) == pytest.approx(system2.log_R()[-1] / math.log(10), abs=1e-12)
    assert float(R_last.log10()) < -300


def test_truncated(system2):
    t = system2.truncated(10)
    assert len(t) == 10 and np.array_equal(t.R_mant, system2.R_mant[:10])
    with pytest.raises(IndexOutOfRange):
        system2.truncated(0)


# ---------------------------------------------------------------- anchored points


def test_anchored_offsets_limited(system2):
    with pytest.raises(DomainError):
        AnchoredPoints(5, np.array([[5.0, 0.0]]))
    AnchoredPoints(0, np.array([[0.5, 0.0]]))


def test_local_coordinates_deep(system2):
    # a point given relative to E_900 lands at the predicted spot of B_900
    pts = AnchoredPoints(900, np.array([[0.25, 0.0]]))
    z = system2.local(pts, 900)
    assert np.allclose(z, [[0.5, 0.0]])
    # and is far from the first ball's center in its units
    z1 = system2.local(pts, 1)
    assert np.allclose(z1, system2.centers[899] / system2.r[0])


# ---------------------------------------------------------------- regions


def test_region_membership_examples(system2, params2):
    l = 10
    c = AnchoredPoints(l, np.zeros((1, 2)))
    assert region_membership(system2, params2, l, c, "E")[0]
    assert region_membership(system2, params2, l, c, "B")[0]
    assert not region_membership(system2, params2, l, c, "G")[0]
    eps = params2.epsilon
    y = (1 - eps) / math.sqrt(2) * np.array([[1.0, 1.0]]) * 0.5 * (1 - 1e-12)  # units of R_l
    assert region_membership(system2, params2, l, AnchoredPoints(l, y), "G")[0]
    far = AnchoredPoints(l, np.array([[1.5, 0.0]]))
    for region in ("E", "B", "G", "M"):
        assert not region_membership(system2, params2, l, far, region)[0]


def test_membership_index_checked(system2, params2):
    with pytest.raises(IndexOutOfRange):
        region_membership(system2, params2, 1001, AnchoredPoints(0, np.zeros((1, 2))), "E")


def test_good_region_is_scale_free():
    z = np.random.default_rng(1).uniform(-1, 1, (1000, 2))
    assert np.array_equal(in_good_region(z, 0.07), in_good_region(z * 1.0, 0.07))


def test_calibrated_epsilon_two_dimensions():
    params = calibrate_epsilon(Domain(2), QuadratureSpec(n_samples=1 << 16))
    assert params.epsilon == pytest.approx(0.07)
    # analytic area bound at 0.07: slabs <= 8 eps, annulus <= 2 pi eps, below pi/3
    assert 8 * 0.07 + 2 * math.pi * 0.07 < math.pi / 3


def test_degenerate_epsilon_limit():
    z = np.random.default_rng(2).uniform(-1, 1, (20000, 2))
    z = z[np.linalg.norm(z, axis=1) < 1]
    assert in_good_region(z, 1e-9).mean() > 0.999


def test_region_fraction_examples(system2, params2):
    q = QuadratureSpec(n_samples=1 << 15, seed=4)
    assert estimate_region_fraction(system2, params2, 20, "E", q).fraction == 1.0
    m = estimate_region_fraction(system2, params2, 20, "M", q)
    assert m.fraction >= 1 / 3 - 3 * m.se
    bg = estimate_region_fraction(system2, params2, 20, "background", q)
    assert bg.fraction >= 2 / 3 - 3 * bg.se


def test_tail_measure_small(system2):
    assert tail_measure_ratio(system2, 10) < 0.49**2 / (1 - 0.49**2) + 1e-12


# ---------------------------------------------------------------- covering radius


def test_covering_radius_single_ball():
    s = build_ball_system(Domain(2), 0.49, 1)
    assert covering_radius(s, QuadratureSpec(n_samples=2000)) <= 1.0


def test_covering_radius_shrinks():
    s = build_ball_system(Domain(2), 0.49, 4096)
    probes = QuadratureSpec(n_samples=10**4)
    values = [covering_radius(s, probes, c) for c in (16, 64, 256, 1024, 4096)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] < values[2]
