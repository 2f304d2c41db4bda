"""34-channel conditioning stack: 24 power channels + 10 layout channels.

Channel order is frozen; the sidecar stores per-channel (min, max) so raw
values can be recovered exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .design import N_TIME_SLOTS, SyntheticDesign
from .tensorio import read_gift, write_gift

CHANNEL_NAMES: tuple[str, ...] = (
    "p_i",
    "p_s",
    "p_sca",
    "p_all",
    *[f"p_t{k:02d}" for k in range(N_TIME_SLOTS)],
    "c_den",
    "macro",
    "rudy",
    "rudy_pin",
    "rudy_long",
    "rudy_short",
    "ovfl_egr_h",
    "ovfl_egr_v",
    "ovfl_gr_h",
    "ovfl_gr_v",
)
N_POWER_CHANNELS = 4 + N_TIME_SLOTS
N_LAYOUT_CHANNELS = 10
N_CHANNELS = N_POWER_CHANNELS + N_LAYOUT_CHANNELS
SIDECAR_VERSION = 1


@dataclass
class PowerReport:
    """Per-instance power/timing numbers, keyed by instance id."""

    p_internal: dict[int, float]
    p_switching: dict[int, float]
    p_leakage: dict[int, float]
    toggle_rate: dict[int, float]
    switching_window: dict[int, list[int]]

    @staticmethod
    def from_design(design: SyntheticDesign) -> "PowerReport":
        return PowerReport(
            p_internal={i.id: i.p_internal for i in design.instances},
            p_switching={i.id: i.p_switching for i in design.instances},
            p_leakage={i.id: i.p_leakage for i in design.instances},
            toggle_rate={i.id: i.toggle_rate for i in design.instances},
            switching_window={i.id: list(i.switching_window) for i in design.instances},
        )


@dataclass
class FeatureStack:
    tensor: np.ndarray  # 34 x H x W, each channel min-max normalized to [0,1]
    channel_names: tuple[str, ...]
    norm_params: list[tuple[float, float]]  # per-channel (min, max) of the raw map

    def raw(self, name: str) -> np.ndarray:
        """Recover a raw (denormalized) channel."""
        i = self.channel_names.index(name)
        lo, hi = self.norm_params[i]
        return self.tensor[i] * (hi - lo) + lo

    def raw_all(self) -> np.ndarray:
        lo = np.array([p[0] for p in self.norm_params])[:, None, None]
        hi = np.array([p[1] for p in self.norm_params])[:, None, None]
        return self.tensor * (hi - lo) + lo

    def save(self, gift_path, sidecar_path) -> None:
        write_gift(self.tensor, gift_path)
        doc = {
            "format": "irdiff-features",
            "version": SIDECAR_VERSION,
            "channel_names": list(self.channel_names),
            "norm_params": [list(p) for p in self.norm_params],
        }
        with open(sidecar_path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)

    @staticmethod
    def load(gift_path, sidecar_path) -> "FeatureStack":
        tensor = read_gift(gift_path)
        with open(sidecar_path) as f:
            doc = json.load(f)
        names = tuple(doc["channel_names"])
        if names != CHANNEL_NAMES:
            raise ValueError("feature sidecar has wrong channel order (format error)")
        if doc.get("version") != SIDECAR_VERSION:
            raise ValueError("feature sidecar version mismatch")
        return FeatureStack(
            tensor=tensor,
            channel_names=names,
            norm_params=[tuple(p) for p in doc["norm_params"]],
        )


def tile_membership(
    bbox: tuple[float, float, float, float], grid_h: int, grid_w: int
) -> list[tuple[int, int]]:
    """Tiles an instance belongs to: bbox covers >= 50% of the tile area.

    Falls back to the tile containing the bbox center when no tile passes
    the threshold, so per-instance power is always conserved on the grid.
    """
    l, b, r, t = bbox
    tiles = []
    for y in range(max(0, floor(b)), min(grid_h, ceil(t))):
        oy = min(t, y + 1.0) - max(b, float(y))
        if oy <= 0:
            continue
        for x in range(max(0, floor(l)), min(grid_w, ceil(r))):
            ox = min(r, x + 1.0) - max(l, float(x))
            if ox > 0 and ox * oy >= 0.5:
                tiles.append((y, x))
    if not tiles:
        cx = min(grid_w - 1, max(0, int((l + r) / 2.0)))
        cy = min(grid_h - 1, max(0, int((b + t) / 2.0)))
        tiles = [(cy, cx)]
    return tiles


def build_power_channels(design: SyntheticDesign, report: PowerReport) -> np.ndarray:
    """Raw (unnormalized) 24 x H x W power channels.

    Each instance's power is spread uniformly over its member tiles;
    p_sca = (p_s + p_i) * r_togg + p_l; the time-decomposed channels split
    p_sca evenly across the instance's switching window so they sum back to
    p_sca per tile.
    """
    h, w = design.grid_h, design.grid_w
    out = np.zeros((N_POWER_CHANNELS, h, w), dtype=np.float64)
    for inst in design.instances:
        if inst.id not in report.p_internal:
            raise KeyError(f"instance {inst.id} missing from power report")
        p_i = report.p_internal[inst.id]
        p_s = report.p_switching[inst.id]
        p_l = report.p_leakage[inst.id]
        r_togg = report.toggle_rate[inst.id]
        window = report.switching_window[inst.id]
        p_sca = (p_s + p_i) * r_togg + p_l
        p_all = p_s + p_i + p_l
        tiles = tile_membership(inst.bbox, h, w)
        share = 1.0 / len(tiles)
        per_slot = p_sca / len(window)
        for y, x in tiles:
            out[0, y, x] += p_i * share
            out[1, y, x] += p_s * share
            out[2, y, x] += p_sca * share
            out[3, y, x] += p_all * share
            for k in window:
                out[4 + k, y, x] += per_slot * share
    return out


def _net_tile_bbox(design: SyntheticDesign, net) -> tuple[int, int, int, int]:
    """Tile-aligned bounding box (x0, y0, x1, y1 inclusive) of a net."""
    insts = [design.instances[i] for i in net.instance_ids]
    l = min(i.bbox[0] for i in insts)
    b = min(i.bbox[1] for i in insts)
    r = max(i.bbox[2] for i in insts)
    t = max(i.bbox[3] for i in insts)
    x0 = max(0, floor(l))
    y0 = max(0, floor(b))
    x1 = min(design.grid_w - 1, max(x0, ceil(r) - 1))
    y1 = min(design.grid_h - 1, max(y0, ceil(t) - 1))
    return x0, y0, x1, y1


def routing_demand(design: SyntheticDesign) -> tuple[np.ndarray, np.ndarray]:
    """Directional routing demand: horizontal w/(w*h), vertical h/(w*h)."""
    h, w = design.grid_h, design.grid_w
    dem_h = np.zeros((h, w), dtype=np.float64)
    dem_v = np.zeros((h, w), dtype=np.float64)
    for net in design.nets:
        x0, y0, x1, y1 = _net_tile_bbox(design, net)
        bw = x1 - x0 + 1
        bh = y1 - y0 + 1
        dem_h[y0 : y1 + 1, x0 : x1 + 1] += bw / (bw * bh)
        dem_v[y0 : y1 + 1, x0 : x1 + 1] += bh / (bw * bh)
    return dem_h, dem_v


def overflow_maps(design: SyntheticDesign) -> np.ndarray:
    """4 x H x W overflow channels (eGR H/V, GR H/V) from demand vs capacity."""
    dem_h, dem_v = routing_demand(design)
    out = np.zeros((4, design.grid_h, design.grid_w), dtype=np.float64)
    for i, (dem, cap) in enumerate(
        [
            (dem_h, design.egr_capacity),
            (dem_v, design.egr_capacity),
            (dem_h, design.gr_capacity),
            (dem_v, design.gr_capacity),
        ]
    ):
        out[i] = np.maximum(0.0, dem - cap) / cap
    return out


def build_layout_channels(design: SyntheticDesign) -> np.ndarray:
    """Raw 10 x H x W layout channels in the frozen order."""
    h, w = design.grid_h, design.grid_w
    out = np.zeros((N_LAYOUT_CHANNELS, h, w), dtype=np.float64)

    # Cell density: instance membership count per tile.
    for inst in design.instances:
        for y, x in tile_membership(inst.bbox, h, w):
            out[0, y, x] += 1.0

    # Macro indicator.
    for ml, mb, mr, mt in design.macros:
        out[1, mb:mt, ml:mr] = 1.0

    # RUDY kernels; long/short split at the median half-perimeter (ties -> short).
    half_perims = []
    net_boxes = []
    for net in design.nets:
        x0, y0, x1, y1 = _net_tile_bbox(design, net)
        bw, bh = x1 - x0 + 1, y1 - y0 + 1
        net_boxes.append((net, x0, y0, x1, y1, bw, bh))
        half_perims.append(bw + bh)
    median_hp = float(np.median(half_perims)) if half_perims else 0.0
    for net, x0, y0, x1, y1, bw, bh in net_boxes:
        kern = (bw + bh) / (bw * bh)
        out[2, y0 : y1 + 1, x0 : x1 + 1] += kern
        out[3, y0 : y1 + 1, x0 : x1 + 1] += kern * len(net.instance_ids)
        if bw + bh > median_hp:
            out[4, y0 : y1 + 1, x0 : x1 + 1] += kern
        else:
            out[5, y0 : y1 + 1, x0 : x1 + 1] += kern

    out[6:10] = overflow_maps(design)
    return out


def compose_feature_stack(power24: np.ndarray, layout10: np.ndarray) -> FeatureStack:
    """Concatenate in fixed order and min-max normalize each channel."""
    if power24.shape[0] != N_POWER_CHANNELS or layout10.shape[0] != N_LAYOUT_CHANNELS:
        raise ValueError("wrong channel counts")
    if power24.shape[1:] != layout10.shape[1:]:
        raise ValueError(f"shape mismatch: {power24.shape[1:]} vs {layout10.shape[1:]}")
    raw = np.concatenate([power24, layout10], axis=0)
    norm = np.zeros_like(raw)
    params = []
    for c in range(N_CHANNELS):
        lo = float(raw[c].min())
        hi = float(raw[c].max())
        params.append((lo, hi))
        if hi > lo:
            norm[c] = (raw[c] - lo) / (hi - lo)
        # constant channels stay 0
    return FeatureStack(tensor=norm, channel_names=CHANNEL_NAMES, norm_params=params)


def build_feature_stack(design: SyntheticDesign, report: PowerReport | None = None) -> FeatureStack:
    report = report or PowerReport.from_design(design)
    return compose_feature_stack(
        build_power_channels(design, report), build_layout_channels(design)
    )
