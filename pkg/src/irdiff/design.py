"""Synthetic chip-layout-like designs.

A design is a tile grid with placed instances (bounding box, per-instance
power numbers, toggle rate, switching window), nets connecting spatially
nearby instances, macro regions, supply pads on a regular sub-grid, and the
current/resistance proxy coefficients used to produce its ground truth.

Placement is a mixture of Gaussians over the grid so density, routing demand
and voltage-drop maps have spatial structure instead of uniform noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .rng import Rng

N_TIME_SLOTS = 20
DEFAULT_TILE_SIZE_UM = 2.25
DEFAULT_ALPHA = (0.1, 0.1, 0.1, 0.1)
DEFAULT_BETA = (0.25, 0.25, 0.25, 0.25)


class DesignError(ValueError):
    pass


@dataclass
class Instance:
    id: int
    cell_type: str
    bbox: tuple[float, float, float, float]  # (l, b, r, t) in tile units
    p_internal: float
    p_switching: float
    p_leakage: float
    toggle_rate: float
    switching_window: list[int]
    pin_count: int = 0

    @property
    def center(self) -> tuple[float, float]:
        l, b, r, t = self.bbox
        return ((l + r) / 2.0, (b + t) / 2.0)


@dataclass
class Net:
    id: int
    name: str
    instance_ids: list[int]


@dataclass
class GenConfig:
    tile_size_um: float = DEFAULT_TILE_SIZE_UM
    vdd: float = 1.0
    r0: float = 1.0
    pad_every: int = 8
    pad_gain: float = 100.0  # g_pad = pad_gain / r0
    n_clusters: tuple[int, int] = (3, 6)
    macro_count: tuple[int, int] = (0, 3)
    net_decay_tiles: float = 6.0
    max_fanout: int = 5
    alpha: tuple[float, float, float, float] = DEFAULT_ALPHA
    beta: tuple[float, float, float, float] = DEFAULT_BETA
    egr_capacity: float = 0.6
    gr_capacity: float = 0.8


@dataclass
class SyntheticDesign:
    grid_h: int
    grid_w: int
    tile_size_um: float
    vdd: float
    r0: float
    g_pad: float
    instances: list[Instance]
    nets: list[Net]
    macros: list[tuple[int, int, int, int]]  # (l, b, r, t) tile rectangles, r/t exclusive
    pad_locations: list[tuple[int, int]]  # (row, col)
    alpha: tuple[float, float, float, float] = DEFAULT_ALPHA
    beta: tuple[float, float, float, float] = DEFAULT_BETA
    egr_capacity: float = 0.6
    gr_capacity: float = 0.8
    seed: int = 0

    def validate(self) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        bad = []
        if not self.pad_locations:
            bad.append("design has no pad locations")
        for r, c in self.pad_locations:
            if not (0 <= r < self.grid_h and 0 <= c < self.grid_w):
                bad.append(f"pad ({r},{c}) outside grid")
        ids = {inst.id for inst in self.instances}
        pin_counts = {i: 0 for i in ids}
        for inst in self.instances:
            l, b, r, t = inst.bbox
            if not (0 <= l <= r <= self.grid_w and 0 <= b <= t <= self.grid_h):
                bad.append(f"instance {inst.id} bbox {inst.bbox} outside grid")
            if min(inst.p_internal, inst.p_switching, inst.p_leakage) < 0:
                bad.append(f"instance {inst.id} has negative power")
            if not (0.0 <= inst.toggle_rate <= 1.0):
                bad.append(f"instance {inst.id} toggle rate out of [0,1]")
            if not inst.switching_window:
                bad.append(f"instance {inst.id} has empty switching window")
            if any(k not in range(N_TIME_SLOTS) for k in inst.switching_window):
                bad.append(f"instance {inst.id} switching window out of range")
        for net in self.nets:
            if len(set(net.instance_ids)) < 2:
                bad.append(f"net {net.id} touches fewer than 2 distinct instances")
            for i in net.instance_ids:
                if i not in ids:
                    bad.append(f"net {net.id} references unknown instance {i}")
                else:
                    pin_counts[i] += 1
        for inst in self.instances:
            if inst.pin_count != pin_counts.get(inst.id, 0):
                bad.append(
                    f"instance {inst.id} pin_count {inst.pin_count} != "
                    f"{pin_counts.get(inst.id, 0)} pins on nets"
                )
        return bad

    def check(self) -> "SyntheticDesign":
        bad = self.validate()
        if bad:
            raise DesignError("; ".join(bad))
        return self

    def scale_power(self, s: float) -> None:
        """Scale instance powers and current-proxy coefficients jointly.

        The effective current map is linear in (powers, alpha), so this
        scales the solved voltage drop by exactly s.
        """
        for inst in self.instances:
            inst.p_internal *= s
            inst.p_switching *= s
            inst.p_leakage *= s
        self.alpha = tuple(a * s for a in self.alpha)

    # -- JSON schema ---------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": "irdiff-design",
            "version": 1,
            "seed": self.seed,
            "grid": {"h": self.grid_h, "w": self.grid_w, "tile_size_um": self.tile_size_um},
            "supply": {"vdd": self.vdd, "r0": self.r0, "g_pad": self.g_pad},
            "coeffs": {
                "alpha": list(self.alpha),
                "beta": list(self.beta),
                "egr_capacity": self.egr_capacity,
                "gr_capacity": self.gr_capacity,
            },
            "pads": [list(p) for p in self.pad_locations],
            "macros": [list(m) for m in self.macros],
            "instances": [asdict(i) for i in self.instances],
            "nets": [asdict(n) for n in self.nets],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SyntheticDesign":
        doc = json.loads(text)
        if doc.get("format") != "irdiff-design":
            raise DesignError("not an irdiff design document")
        insts = [
            Instance(
                id=i["id"],
                cell_type=i["cell_type"],
                bbox=tuple(i["bbox"]),
                p_internal=i["p_internal"],
                p_switching=i["p_switching"],
                p_leakage=i["p_leakage"],
                toggle_rate=i["toggle_rate"],
                switching_window=list(i["switching_window"]),
                pin_count=i["pin_count"],
            )
            for i in doc["instances"]
        ]
        nets = [Net(id=n["id"], name=n["name"], instance_ids=list(n["instance_ids"])) for n in doc["nets"]]
        return SyntheticDesign(
            grid_h=doc["grid"]["h"],
            grid_w=doc["grid"]["w"],
            tile_size_um=doc["grid"]["tile_size_um"],
            vdd=doc["supply"]["vdd"],
            r0=doc["supply"]["r0"],
            g_pad=doc["supply"]["g_pad"],
            instances=insts,
            nets=nets,
            macros=[tuple(m) for m in doc["macros"]],
            pad_locations=[tuple(p) for p in doc["pads"]],
            alpha=tuple(doc["coeffs"]["alpha"]),
            beta=tuple(doc["coeffs"]["beta"]),
            egr_capacity=doc["coeffs"]["egr_capacity"],
            gr_capacity=doc["coeffs"]["gr_capacity"],
            seed=doc["seed"],
        )


def generate_design(
    seed: int,
    grid_h: int,
    grid_w: int,
    n_instances: int,
    n_nets: int,
    gen_config: GenConfig | None = None,
) -> SyntheticDesign:
    """Deterministic synthetic design for a given seed."""
    cfg = gen_config or GenConfig()
    if n_instances < 1:
        raise DesignError("need at least one instance")
    if grid_h < 8 or grid_w < 8:
        raise DesignError(f"grid {grid_h}x{grid_w} too small (min 8x8)")

    rng = Rng(seed).stream("design")

    # Clustered placement: mixture of Gaussians over the grid.
    k = int(rng.integers(cfg.n_clusters[0], cfg.n_clusters[1] + 1))
    centers = np.column_stack(
        [rng.uniform(k) * grid_w, rng.uniform(k) * grid_h]
    )
    spread = max(grid_h, grid_w) / 8.0

    instances: list[Instance] = []
    for i in range(n_instances):
        c = int(rng.integers(0, k))
        cx = float(np.clip(centers[c, 0] + spread * rng.normal(), 0.6, grid_w - 0.6))
        cy = float(np.clip(centers[c, 1] + spread * rng.normal(), 0.6, grid_h - 0.6))
        w = float(0.4 + 2.0 * rng.uniform())
        h = float(0.4 + 2.0 * rng.uniform())
        l = float(np.clip(cx - w / 2, 0.0, grid_w - 0.1))
        r = float(np.clip(cx + w / 2, l + 0.1, grid_w))
        b = float(np.clip(cy - h / 2, 0.0, grid_h - 0.1))
        t = float(np.clip(cy + h / 2, b + 0.1, grid_h))
        area = (r - l) * (t - b)
        base = area * (0.5 + rng.uniform())
        win_len = int(rng.integers(1, 9))
        win_start = int(rng.integers(0, N_TIME_SLOTS - win_len + 1))
        instances.append(
            Instance(
                id=i,
                cell_type=f"CELL{int(rng.integers(0, 8))}",
                bbox=(l, b, r, t),
                p_internal=float(base * rng.uniform()),
                p_switching=float(base * rng.uniform()),
                p_leakage=float(0.1 * base * rng.uniform()),
                toggle_rate=float(rng.uniform()),
                switching_window=list(range(win_start, win_start + win_len)),
            )
        )

    # Nets: connect spatially nearby instances, probability decaying in distance.
    centers_xy = np.array([inst.center for inst in instances])
    nets: list[Net] = []
    if n_instances >= 2:
        for j in range(n_nets):
            driver = int(rng.integers(0, n_instances))
            d = np.hypot(
                centers_xy[:, 0] - centers_xy[driver, 0],
                centers_xy[:, 1] - centers_xy[driver, 1],
            )
            w = np.exp(-d / cfg.net_decay_tiles)
            w[driver] = 0.0
            total = w.sum()
            if total <= 0:
                continue
            fanout = int(rng.integers(1, cfg.max_fanout))
            members = [driver]
            # Sequential weighted sampling without replacement.
            for _ in range(fanout):
                total = w.sum()
                if total <= 0:
                    break
                u = rng.uniform() * total
                cand = int(np.searchsorted(np.cumsum(w), u, side="right"))
                cand = min(cand, n_instances - 1)
                members.append(cand)
                w[cand] = 0.0
            if len(set(members)) >= 2:
                nets.append(Net(id=len(nets), name=f"n{len(nets)}", instance_ids=sorted(set(members))))

    for net in nets:
        for i in net.instance_ids:
            instances[i].pin_count += 1

    # Macros: a few tile-aligned rectangles.
    n_macros = int(rng.integers(cfg.macro_count[0], cfg.macro_count[1] + 1))
    macros = []
    for _ in range(n_macros):
        mw = int(rng.integers(3, max(4, grid_w // 4)))
        mh = int(rng.integers(3, max(4, grid_h // 4)))
        ml = int(rng.integers(0, grid_w - mw))
        mb = int(rng.integers(0, grid_h - mh))
        macros.append((ml, mb, ml + mw, mb + mh))

    # Supply pads on a regular sub-grid.
    off = cfg.pad_every // 2
    pads = [
        (r, c)
        for r in range(off, grid_h, cfg.pad_every)
        for c in range(off, grid_w, cfg.pad_every)
    ]
    if not pads:
        pads = [(grid_h // 2, grid_w // 2)]

    return SyntheticDesign(
        grid_h=grid_h,
        grid_w=grid_w,
        tile_size_um=cfg.tile_size_um,
        vdd=cfg.vdd,
        r0=cfg.r0,
        g_pad=cfg.pad_gain / cfg.r0,
        instances=instances,
        nets=nets,
        macros=macros,
        pad_locations=pads,
        alpha=cfg.alpha,
        beta=cfg.beta,
        egr_capacity=cfg.egr_capacity,
        gr_capacity=cfg.gr_capacity,
        seed=int(seed),
    ).check()
