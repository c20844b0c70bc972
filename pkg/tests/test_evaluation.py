import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from normalforge.core import CameraIntrinsics, DepthImage, EmptyInputError, InvalidInputError, NormalMap
from normalforge.dataset import Frame, InMemoryDataset
from normalforge.evaluation import (
    EvalReport,
    aae,
    angular_error,
    angular_errors,
    benchmark,
    error_map,
    evaluate_frames,
    pgp,
    pi_score,
    summarize,
)

angles = st.lists(st.floats(0, 180), min_size=1, max_size=50)
vec3 = st.tuples(*[st.floats(-100, 100)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3)


def flat_normals(h, w):
    n = np.zeros((h, w, 3))
    n[..., 2] = -1
    return NormalMap(n)


@pytest.mark.parametrize("a,b,want", [
    ([0, 0, 1], [0, 0, 1], 0.0),
    ([0, 0, 1], [0, 0, -1], 180.0),
    ([1, 0, 0], [0, 1, 0], 90.0),
    ([1, 0, 0], [1, 1, 0], 45.0),
])
def test_angular_error_examples(a, b, want):
    assert angular_error(a, b) == pytest.approx(want, abs=1e-12)


def test_angular_error_rejects_zero():
    with pytest.raises(InvalidInputError):
        angular_error([0, 0, 0], [1, 0, 0])


@settings(max_examples=200, deadline=None)
@given(a=vec3, b=vec3, s=st.floats(1e-3, 1e3), t=st.floats(1e-3, 1e3))
def test_angular_error_symmetric_and_scale_invariant(a, b, s, t):
    e = angular_error(a, b)
    assert angular_error(b, a) == e
    assert angular_error(np.multiply(a, s), np.multiply(b, t)) == pytest.approx(e, abs=1e-9)
    ua, ub = np.array(a) / np.linalg.norm(a), np.array(b) / np.linalg.norm(b)
    ref = math.degrees(math.acos(min(1.0, max(-1.0, float(ua @ ub)))))
    # arccos loses precision near 0 and 180, atan2 does not
    assert e == pytest.approx(ref, abs=1e-5)


def test_aae_examples():
    assert aae([10, 20, 30]) == 20
    assert aae([0]) == 0
    assert aae([1.66] * 7) == pytest.approx(1.66)
    with pytest.raises(EmptyInputError):
        aae([])


def test_pgp_examples():
    assert pgp([5, 15, 25], 20) == 2 / 3
    assert pgp([5, 15, 25], 30) == 1.0
    assert pgp([5, 15, 25], 0) == 0.0
    assert pgp([5, 15, 25], 15) == 2 / 3
    with pytest.raises(EmptyInputError):
        pgp([], 10)
    with pytest.raises(InvalidInputError):
        pgp([1], -1)


@settings(max_examples=200, deadline=None)
@given(errs=angles, phis=st.lists(st.floats(0, 180), min_size=2, max_size=6))
def test_pgp_monotone_and_bounded(errs, phis):
    vals = [pgp(errs, p) for p in sorted(phis)]
    assert all(0 <= v <= 1 for v in vals)
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert pgp(errs, 180) == 1.0


def test_pi_score_examples():
    assert pi_score(2.14, 3.72) == pytest.approx(7.96, abs=0.005)
    assert pi_score(0.0, 12.5) == 0
    assert pi_score(1.0, 1.0) == 1
    with pytest.raises(InvalidInputError):
        pi_score(1.0, -1.0)


def test_error_map_examples():
    gt = flat_normals(5, 6)
    same = error_map(gt, gt)
    assert_array_equal(same.values[same.mask], 0)
    assert same.mask.sum() == 3 * 4
    n = gt.normals.copy()
    n[2, 3] = [0, 0, 1]
    flipped = error_map(NormalMap(n), gt)
    assert flipped.values[2, 3] == 180.0
    assert flipped.values[flipped.mask].sum() == 180.0
    g = gt.normals.copy()
    g[1, 1] = np.nan
    holes = error_map(gt, NormalMap(g))
    assert not holes.mask[1, 1]


def test_error_map_shape_mismatch():
    with pytest.raises(InvalidInputError, match=r"\(5, 6\).*\(5, 7\)"):
        error_map(flat_normals(5, 6), flat_normals(5, 7))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_aae_matches_error_map_mean(seed):
    rng = np.random.default_rng(seed)
    a = NormalMap(rng.normal(size=(6, 7, 3)))
    b = NormalMap(rng.normal(size=(6, 7, 3)))
    emap = error_map(a, b)
    brute = [angular_error(a.normals[v, u], b.normals[v, u]) for v in range(1, 5) for u in range(1, 6)]
    assert aae(emap.values[emap.mask]) == pytest.approx(np.mean(brute), rel=1e-12)
    assert aae(angular_errors(a.normals[emap.mask], b.normals[emap.mask])) == pytest.approx(np.mean(brute), rel=1e-12)


def test_pooling_two_frames():
    r = summarize([np.full(10, 10.0), np.full(10, 20.0)], ["a", "b"], [1.0, 3.0])
    assert r.e_A == 15.0
    assert r.m == 20
    assert r.t == 2.0
    assert r.pi == 30.0
    assert r.e_P[10.0] == 0.5
    # unequal counts: pooled and per-frame conventions differ
    r = summarize([np.full(30, 10.0), np.full(10, 20.0)], ["a", "b"], [1.0, 1.0])
    assert r.e_A == 12.5
    assert r.frame_mean_e_A == 15.0


def test_report_dict_round_trip():
    r = summarize([np.array([1.0, 2.0])], ["x"], [4.0], method="fd-mean", dataset="d",
                  failures={"y": "FormatError: bad"})
    back = EvalReport.from_dict(r.to_dict())
    assert back == r
    assert back.failed_frames == ["y"]


def plane_dataset(n=1):
    K = CameraIntrinsics(100.0, 100.0, 15.5, 11.5)
    depth = DepthImage(np.full((24, 32), 2.0))
    frames = [Frame(f"{i:06d}", depth, flat_normals(24, 32), K) for i in range(n)]
    return InMemoryDataset(frames, "flat")


def test_benchmark_perfect_prediction():
    r = benchmark(lambda d, K: flat_normals(*d.shape), plane_dataset(), repetitions=3)
    assert r.e_A == 0 and r.e_P[10.0] == 1 and r.pi == 0
    assert r.m == 22 * 30
    assert r.dataset == "flat"


def test_benchmark_deterministic_across_repetitions():
    ds = plane_dataset(2)
    a = benchmark("fd-median", ds, repetitions=1)
    b = benchmark("fd-median", ds, repetitions=4)
    assert a.e_A == b.e_A and a.e_P == b.e_P and a.m == b.m


def test_benchmark_times_only_estimation_and_takes_median():
    ticks = iter([0.0, 0.001, 1.0, 1.005, 2.0, 2.003])
    calls = []

    def est(d, K):
        calls.append(1)
        return flat_normals(*d.shape)

    r = benchmark(est, plane_dataset(), repetitions=3, clock=lambda: next(ticks))
    assert len(calls) == 4  # one warmup
    assert r.t == pytest.approx(3.0)
    assert r.frames[0].t == pytest.approx(3.0)


class Broken(InMemoryDataset):
    def load(self, name):
        if name == "000001":
            raise OSError("unreadable")
        return super().load(name)


def test_benchmark_records_failed_frames():
    ds = Broken(list(plane_dataset(3).frames.values()), "broken")
    r = benchmark("fd-mean", ds, repetitions=1)
    assert r.failed_frames == ["000001"]
    assert r.m == 2 * 22 * 30
    assert "unreadable" in r.frames[-1].error


def test_benchmark_validation():
    with pytest.raises(InvalidInputError):
        benchmark("fd-mean", plane_dataset(), repetitions=0)
    with pytest.raises(EmptyInputError):
        benchmark("fd-mean", InMemoryDataset([], "empty"))


def test_evaluate_frames():
    gt = flat_normals(5, 5)
    r = evaluate_frames([gt, gt], [gt, gt], names=["a", "b"], phis=[5])
    assert r.e_A == 0 and r.m == 18 and list(r.e_P) == [5.0]
