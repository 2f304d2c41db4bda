"""Evaluation metrics for generated voltage-drop maps.

All maps are normalized to [0, 1] relative to the supply voltage, so MAE is
directly a fraction of the supply and PSNR uses MAX = 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(yhat: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    return yhat, y


def mae(yhat: np.ndarray, y: np.ndarray) -> float:
    yhat, y = _check_pair(yhat, y)
    return float(np.mean(np.abs(yhat - y)))


def rmse(yhat: np.ndarray, y: np.ndarray) -> float:
    yhat, y = _check_pair(yhat, y)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def nmae(yhat: np.ndarray, y: np.ndarray) -> float:
    """MAE normalized by the maximum ground-truth drop."""
    yhat, y = _check_pair(yhat, y)
    ymax = float(np.max(y))
    if ymax <= 0:
        raise ValueError("nmae undefined for all-zero ground truth")
    return mae(yhat, y) / ymax


def psnr(yhat: np.ndarray, y: np.ndarray) -> float:
    """10*log10(1/MSE) for [0,1]-range maps; +inf sentinel for identical maps."""
    yhat, y = _check_pair(yhat, y)
    mse = float(np.mean((yhat - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """1-D Gaussian weights, normalized to sum 1."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable Gaussian filtering, valid windows only."""
    from numpy.lib.stride_tricks import sliding_window_view

    k = g.shape[0]
    tmp = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(tmp, k, axis=1) @ g


def ssim(yhat: np.ndarray, y: np.ndarray) -> float:
    """Single-scale SSIM, 11x11 Gaussian window, valid window centers only."""
    yhat, y = _check_pair(yhat, y)
    h, w = y.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    mu_x = _filter_valid(yhat, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(yhat * yhat, g) - mu_x ** 2
    var_y = _filter_valid(y * y, g) - mu_y ** 2
    cov = _filter_valid(yhat * y, g) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def pearson_flagged(yhat: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Pearson correlation; returns (0.0, False) when either input is constant."""
    yhat, y = _check_pair(yhat, y)
    a = yhat.ravel() - yhat.mean()
    b = y.ravel() - y.mean()
    na = float(np.sqrt(np.sum(a * a)))
    nb = float(np.sqrt(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        return 0.0, False
    return float(np.sum(a * b) / (na * nb)), True


def pearson(yhat: np.ndarray, y: np.ndarray) -> float:
    return pearson_flagged(yhat, y)[0]


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their mean rank."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_flagged(yhat: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    yhat, y = _check_pair(yhat, y)
    return pearson_flagged(average_ranks(yhat), average_ranks(y))


def spearman(yhat: np.ndarray, y: np.ndarray) -> float:
    return spearman_flagged(yhat, y)[0]


@dataclass
class EvalReport:
    per_sample: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    n_samples: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def enc(v):
            return "inf" if v == math.inf else v

        doc = {
            "n_samples": self.n_samples,
            "aggregate": {k: enc(v) for k, v in self.aggregate.items()},
            "per_sample": [{k: enc(v) for k, v in s.items()} for s in self.per_sample],
            "config": self.config,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def csv_rows(self) -> list[str]:
        keys = ["mae", "rmse", "nmae", "psnr_db", "ssim", "pearson", "spearman"]
        rows = ["sample," + ",".join(keys)]
        for s in self.per_sample:
            rows.append(str(s["sample"]) + "," + ",".join(f"{s[k]:.10g}" for k in keys))
        return rows


METRIC_KEYS = ("mae", "rmse", "nmae", "psnr_db", "ssim", "pearson", "spearman")


def evaluate_pair(yhat: np.ndarray, y: np.ndarray) -> dict:
    pear, pear_ok = pearson_flagged(yhat, y)
    spear, spear_ok = spearman_flagged(yhat, y)
    return {
        "mae": mae(yhat, y),
        "rmse": rmse(yhat, y),
        "nmae": nmae(yhat, y),
        "psnr_db": psnr(yhat, y),
        "ssim": ssim(yhat, y),
        "pearson": pear,
        "spearman": spear,
        "correlation_defined": pear_ok and spear_ok,
    }


def evaluate_all(samples: list[tuple[np.ndarray, np.ndarray]], config: dict | None = None) -> EvalReport:
    """Evaluate one generated map per design and aggregate by unweighted mean."""
    if not samples:
        raise ValueError("no samples to evaluate")
    report = EvalReport(config=config or {}, n_samples=len(samples))
    for idx, (yhat, y) in enumerate(samples):
        row = evaluate_pair(yhat, y)
        row["sample"] = idx
        report.per_sample.append(row)
    for key in METRIC_KEYS:
        report.aggregate[key] = float(np.mean([s[key] for s in report.per_sample]))
    return report
