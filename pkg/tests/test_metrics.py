import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irdiff.metrics import (
    EvalReport,
    average_ranks,
    evaluate_all,
    evaluate_pair,
    gaussian_window,
    mae,
    nmae,
    pearson,
    pearson_flagged,
    psnr,
    rmse,
    spearman,
    spearman_flagged,
    ssim,
    SSIM_C1,
    SSIM_C2,
    SSIM_WINDOW,
)


def _pair(seed=0, shape=(16, 16)):
    rng = np.random.default_rng(seed)
    y = rng.random(shape)
    yhat = np.clip(y + 0.1 * rng.standard_normal(shape), 0, 1)
    return yhat, y


# -- double-loop brute-force oracles ----------------------------------------


def brute_mae(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            total += abs(a[i, j] - b[i, j])
    return total / a.size


def brute_rmse(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            total += (a[i, j] - b[i, j]) ** 2
    return math.sqrt(total / a.size)


def brute_pearson(a, b):
    a, b = a.ravel(), b.ravel()
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)


def brute_ssim(a, b):
    """Non-separable 2-D Gaussian-window SSIM, valid windows only."""
    g1 = gaussian_window()
    g2 = np.outer(g1, g1)
    k = SSIM_WINDOW
    h, w = a.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            wa = a[i : i + k, j : j + k]
            wb = b[i : i + k, j : j + k]
            mx = (g2 * wa).sum()
            my = (g2 * wb).sum()
            vx = (g2 * wa * wa).sum() - mx ** 2
            vy = (g2 * wb * wb).sum() - my ** 2
            cov = (g2 * wa * wb).sum() - mx * my
            vals.append(
                ((2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2))
                / ((mx ** 2 + my ** 2 + SSIM_C1) * (vx + vy + SSIM_C2))
            )
    return float(np.mean(vals))


def test_mae_rmse_psnr_vs_brute_force():
    yhat, y = _pair(0)
    assert abs(mae(yhat, y) - brute_mae(yhat, y)) <= 1e-10
    assert abs(rmse(yhat, y) - brute_rmse(yhat, y)) <= 1e-10
    want_psnr = 10 * math.log10(1.0 / brute_rmse(yhat, y) ** 2)
    assert abs(psnr(yhat, y) - want_psnr) <= 1e-10


def test_pearson_vs_brute_force():
    yhat, y = _pair(1)
    assert abs(pearson(yhat, y) - brute_pearson(yhat, y)) <= 1e-10


def test_spearman_vs_brute_force():
    yhat, y = _pair(2)
    want = brute_pearson(average_ranks(yhat), average_ranks(y))
    assert abs(spearman(yhat, y) - want) <= 1e-10


def test_ssim_vs_brute_force():
    yhat, y = _pair(3)
    assert abs(ssim(yhat, y) - brute_ssim(yhat, y)) <= 1e-9


def test_ssim_identity():
    _, y = _pair(4)
    assert abs(ssim(y, y) - 1.0) <= 1e-9


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_gaussian_window_normalized():
    g = gaussian_window()
    assert g.shape == (11,)
    assert g.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(g, g[::-1], atol=0)  # symmetric


def test_nmae_definition():
    yhat, y = _pair(5)
    assert nmae(yhat, y) == pytest.approx(mae(yhat, y) / y.max())
    with pytest.raises(ValueError):
        nmae(yhat, np.zeros_like(y))


def test_psnr_identical_is_inf():
    _, y = _pair(6)
    assert psnr(y, y) == math.inf


def test_pearson_affine_invariance():
    _, y = _pair(7)
    yhat = 2.0 * y + 0.1
    assert abs(pearson(yhat, y) - 1.0) <= 1e-12


def test_pearson_constant_flagged():
    _, y = _pair(8)
    val, ok = pearson_flagged(np.full_like(y, 0.5), y)
    assert (val, ok) == (0.0, False)
    val, ok = spearman_flagged(np.full_like(y, 0.5), y)
    assert (val, ok) == (0.0, False)


def test_average_ranks_ties():
    r = average_ranks(np.array([3.0, 1.0, 1.0, 2.0]))
    np.testing.assert_array_equal(r, [4.0, 1.5, 1.5, 3.0])


def test_spearman_monotone_map_is_one():
    _, y = _pair(9)
    assert abs(spearman(y ** 3, y) - 1.0) <= 1e-12


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mae(np.zeros((2, 2)), np.zeros((3, 3)))


def test_evaluate_pair_keys():
    yhat, y = _pair(10)
    row = evaluate_pair(yhat, y)
    assert set(row) == {
        "mae", "rmse", "nmae", "psnr_db", "ssim", "pearson", "spearman",
        "correlation_defined",
    }
    assert row["correlation_defined"] is True


def test_evaluate_all_aggregates_unweighted():
    pairs = [_pair(s) for s in range(3)]
    report = evaluate_all(pairs)
    assert report.n_samples == 3
    for key in ("mae", "pearson"):
        want = np.mean([evaluate_pair(*p)[key] for p in pairs])
        assert report.aggregate[key] == pytest.approx(want)


def test_evaluate_all_empty():
    with pytest.raises(ValueError):
        evaluate_all([])


def test_report_json_inf_encoding():
    y = np.random.default_rng(0).random((16, 16))
    report = evaluate_all([(y, y)])
    doc = json.loads(report.to_json())
    assert doc["aggregate"]["psnr_db"] == "inf"
    assert doc["n_samples"] == 1


def test_report_csv():
    pairs = [_pair(s) for s in range(2)]
    rows = evaluate_all(pairs).csv_rows()
    assert rows[0].startswith("sample,mae,")
    assert len(rows) == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_metric_bounds_property(seed):
    yhat, y = _pair(seed)
    assert 0.0 <= mae(yhat, y) <= 1.0
    assert rmse(yhat, y) >= mae(yhat, y) - 1e-12
    assert -1.0 - 1e-12 <= pearson(yhat, y) <= 1.0 + 1e-12
    assert -1.0 - 1e-12 <= spearman(yhat, y) <= 1.0 + 1e-12
