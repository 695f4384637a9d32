import numpy as np
import pytest

from apblow.errors import DomainError
from apblow.sampling import (
    QuadratureSpec,
    chunks,
    cube_to_ball,
    fraction_and_se,
    mean_and_se,
    parallel_map,
    uniform_ball,
    uniform_cube,
    worker_count,
)


@pytest.mark.parametrize("scheme", ["low-discrepancy", "pseudo-random"])
@pytest.mark.parametrize("dim", [2, 3])
def test_blocks_concatenate_to_whole_stream(scheme, dim):
    spec = QuadratureSpec(scheme, 5000, seed=42)
    whole = uniform_cube(spec, dim, (7, 3))
    cuts = [0, 1, 17, 1024, 1500, 4096, 5000]
    parts = [uniform_cube(spec, dim, (7, 3), a, b) for a, b in zip(cuts, cuts[1:])]
    assert np.array_equal(whole, np.concatenate(parts))


@pytest.mark.parametrize("scheme", ["low-discrepancy", "pseudo-random"])
def test_streams_are_distinct_and_reproducible(scheme):
    spec = QuadratureSpec(scheme, 256, seed=1)
    a = uniform_ball(spec, 2, (1,))
    assert np.array_equal(a, uniform_ball(spec, 2, (1,)))
    assert not np.array_equal(a, uniform_ball(spec, 2, (2,)))
    assert not np.array_equal(a, uniform_ball(QuadratureSpec(scheme, 256, seed=2), 2, (1,)))


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_ball_samples_are_uniform(dim):
    spec = QuadratureSpec("pseudo-random", 1 << 16, seed=3)
    y = uniform_ball(spec, dim, (0,))
    r = np.linalg.norm(y, axis=1)
    assert np.all(r < 1.0)
    # E|y|^2 = n / (n + 2) for the uniform ball
    m, se = mean_and_se(r**2)
    assert abs(m - dim / (dim + 2.0)) < 5 * se
    assert np.all(np.abs(y.mean(axis=0)) < 0.02)


def test_cube_to_ball_maps_into_ball():
    u = np.random.default_rng(0).random((1000, 3))
    assert np.all(np.linalg.norm(cube_to_ball(u), axis=1) < 1.0)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("APBLOW_THREADS", "1")
    assert worker_count() == 1
    assert parallel_map(lambda x: x * x, range(5)) == [0, 1, 4, 9, 16]
    monkeypatch.setenv("APBLOW_THREADS", "3")
    assert worker_count() == 3


def test_parallelism_does_not_change_results(monkeypatch):
    spec = QuadratureSpec(n_samples=40000, seed=9)
    out = {}
    for threads in ("1", "4"):
        monkeypatch.setenv("APBLOW_THREADS", threads)
        out[threads] = np.concatenate(parallel_map(lambda s: uniform_ball(spec, 2, (5,), *s), chunks(40000)))
    assert np.array_equal(out["1"], out["4"])


def test_chunks_cover_range():
    spans = list(chunks(40000, 16384))
    assert spans[0] == (0, 16384) and spans[-1][1] == 40000


def test_fraction_and_mean():
    f, se = fraction_and_se(np.array([True, False, True, True]))
    assert f == 0.75 and se > 0
    m, se = mean_and_se(np.ones(10))
    assert m == 1.0 and se == 0.0


def test_invalid_spec():
    with pytest.raises(DomainError):
        QuadratureSpec("grid", 10, 0)
    with pytest.raises(DomainError):
        QuadratureSpec(n_samples=0)
