import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from stpeval import SequenceTensor
from stpeval.errors import DegenerateFrameError, ShapeError
from stpeval.frame_metrics import (
    SsimConstants,
    mae,
    mae_frames,
    psnr,
    psnr_frames,
    rmse,
    rmse_frames,
    ssim,
    ssim_frames,
    wmape,
)


def pair(seed, shape=(4, 1, 8, 8)):
    rng = np.random.default_rng(seed)
    return rng.random(shape), rng.random(shape) + 0.05


fields = arrays(np.float64, (3, 1, 4, 5), elements=st.floats(0.0, 1.0, allow_nan=False, allow_subnormal=False))


# ---- oracle agreement -------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_error_metrics_match_loops(seed):
    p, t = pair(seed)
    pl, tl = p.tolist(), t.tolist()
    assert mae(p, t) == pytest.approx(oracles.mae(pl, tl), abs=1e-12)
    assert rmse(p, t) == pytest.approx(oracles.rmse(pl, tl), abs=1e-12)
    assert wmape(p, t) == pytest.approx(oracles.wmape(pl, tl), abs=1e-12)
    assert ssim(p, t) == pytest.approx(oracles.ssim(pl, tl), abs=1e-12)
    assert psnr(p, t) == pytest.approx(oracles.psnr(pl, tl), abs=1e-10)


def test_rmse_is_mean_of_per_frame_values():
    # deliberately differs from the global root-mean-square
    p = np.zeros((2, 1, 1, 2))
    t = np.array([0.0, 0.0, 3.0, 4.0]).reshape(2, 1, 1, 2)
    assert rmse(p, t) == pytest.approx(math.sqrt(12.5) / 2)
    assert rmse(p, t) != pytest.approx(oracles.rmse_global(p.tolist(), t.tolist()))


def test_known_values():
    p = np.zeros((1, 1, 2, 2))
    t = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 2, 2)
    assert mae(p, t) == 2.5
    assert rmse(p, t) == math.sqrt(7.5)
    assert wmape(p, t) == 1.0
    assert psnr(p, t) == pytest.approx(20 * math.log10(4 / math.sqrt(7.5)))


# ---- properties -------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(x=fields)
def test_identity(x):
    x = x + 0.01
    assert mae(x, x) == 0.0
    assert rmse(x, x) == 0.0
    assert wmape(x, x) == 0.0
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    vals, capped = psnr_frames(x, x)
    assert capped.all() and (vals == 100.0).all()


@settings(max_examples=60, deadline=None)
@given(a=fields, b=fields)
def test_symmetry_and_bounds(a, b):
    assert mae(a, b) == pytest.approx(mae(b, a), abs=1e-15)
    assert rmse(a, b) == pytest.approx(rmse(b, a), abs=1e-15)
    assert ssim(a, b, SsimConstants()) == pytest.approx(ssim(b, a, SsimConstants()), abs=1e-12)
    assert mae(a, b) >= 0.0
    assert mae(a, b) <= rmse(a, b) + 1e-12
    s = ssim_frames(a, b, SsimConstants())
    assert (s <= 1.0 + 1e-12).all() and (s >= -1.0 - 1e-12).all()


def test_ssim_constants():
    c = SsimConstants()
    assert c.c1 == pytest.approx(1e-4)
    assert c.c2 == pytest.approx(9e-4)
    assert SsimConstants(255.0).c1 == pytest.approx(6.5025)
    assert SsimConstants.for_target(SequenceTensor(np.zeros((1, 1, 2, 2), np.uint8))).data_range == 255.0


def test_ssim_windowed_matches_loop_on_small_frame():
    rng = np.random.default_rng(4)
    p, t = rng.random((2, 1, 13, 12)), rng.random((2, 1, 13, 12))
    x = np.arange(11) - 5.0
    g = np.exp(-x * x / (2 * 1.5 ** 2))
    g /= g.sum()
    k = np.outer(g, g)
    c1, c2 = 1e-4, 9e-4
    expect = []
    for f in range(2):
        vals = []
        for i in range(13 - 10):
            for j in range(12 - 10):
                a, b = p[f, 0, i:i + 11, j:j + 11], t[f, 0, i:i + 11, j:j + 11]
                ma, mb = (k * a).sum(), (k * b).sum()
                va = (k * a * a).sum() - ma * ma
                vb = (k * b * b).sum() - mb * mb
                cv = (k * a * b).sum() - ma * mb
                vals.append((2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
        expect.append(np.mean(vals))
    np.testing.assert_allclose(ssim_frames(p, t, SsimConstants(), windowed=True), expect, atol=1e-12)
    with pytest.raises(ShapeError):
        ssim(p[:, :, :8, :8], t[:, :, :8, :8], windowed=True)


def test_psnr_cap_and_fixed_range():
    t = np.full((2, 1, 2, 2), 0.5)
    p = t.copy()
    p[1] += 0.1
    vals, capped = psnr_frames(p, t)
    assert capped.tolist() == [True, False]
    assert vals[1] == pytest.approx(20 * math.log10(0.5 / 0.1))
    vals, _ = psnr_frames(p, t, data_range=1.0)
    assert vals[1] == pytest.approx(20.0)


def test_degenerate_frames():
    t = np.zeros((2, 1, 2, 2))
    t[0] = 1.0
    with pytest.raises(DegenerateFrameError) as ei:
        wmape(t, t)
    assert "[1]" in str(ei.value)
    with pytest.raises(DegenerateFrameError):
        psnr(t, t)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        mae(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


def test_uint8_inputs_are_promoted():
    a = SequenceTensor(np.full((1, 1, 2, 2), 250, np.uint8))
    b = SequenceTensor(np.full((1, 1, 2, 2), 5, np.uint8))
    # no wraparound in the difference
    assert mae(a, b) == 245.0
    assert mae_frames(b, a).tolist() == [245.0]
    assert rmse_frames(a, b).tolist() == [245.0]
