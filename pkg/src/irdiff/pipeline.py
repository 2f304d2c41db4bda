"""End-to-end pipeline: dataset synthesis, training runs, sampling and eval.

Dataset layout (one directory per run of ``gen``):

    manifest.json
    design_0000/design.json
    design_0000/label.gift
    design_0000/features.gift
    design_0000/features.json
    design_0000/graph.json        (omitted for degenerate designs)
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import diffusion as dd
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .design import GenConfig, SyntheticDesign, generate_design
from .features import FeatureStack, build_feature_stack
from .graph import DegenerateDesignError, DesignGraph, build_graph, netlist_from_design
from .model import ConditionalDenoiser, init_parameters
from .pdn import assemble_system, effective_current, effective_resistance, solve_drop, solve_ir
from .rng import Rng
from .tensorio import read_gift, write_gift, write_png_rgb

log = logging.getLogger("irdiff")


@dataclass
class Sample:
    sample_id: int
    seed: int
    design: SyntheticDesign | None
    label: np.ndarray  # H x W in [0, 1)
    stack: FeatureStack
    graph: DesignGraph | None


def gen_config_from(cfg: ExperimentConfig) -> GenConfig:
    return GenConfig(
        vdd=cfg.data.vdd,
        r0=cfg.data.r0,
        pad_every=cfg.data.pad_every,
        pad_gain=cfg.data.pad_gain,
        alpha=tuple(cfg.features.alpha),
        beta=tuple(cfg.features.beta),
        egr_capacity=cfg.features.egr_capacity,
        gr_capacity=cfg.features.gr_capacity,
    )


def make_sample(sample_id: int, seed: int, cfg: ExperimentConfig) -> Sample:
    """Generate a design, rescale its power to the target worst-case drop,
    and produce features, label, and graph."""
    d = cfg.data
    design = generate_design(seed, d.grid_h, d.grid_w, d.n_instances, d.n_nets, gen_config_from(cfg))

    stack = build_feature_stack(design)
    # Calibration pass: the raw peak can exceed vdd, so skip the range check.
    raw = solve_drop(
        assemble_system(design, effective_resistance(design, stack), effective_current(design, stack))
    )
    peak = float(raw.max()) / design.vdd
    if peak > 0:
        # I_eff is jointly linear in (powers, alpha), so this scaling is exact.
        design.scale_power(d.target_max_drop / peak)
        stack = build_feature_stack(design)
    drop = solve_ir(
        assemble_system(design, effective_resistance(design, stack), effective_current(design, stack)),
        design.vdd,
    )

    try:
        attrs, placement = netlist_from_design(design)
        graph = build_graph(attrs, placement, cfg.graph.fanout_cap)
    except DegenerateDesignError as e:
        log.info("design %d: graph skipped (%s)", sample_id, e)
        graph = None
    return Sample(sample_id=sample_id, seed=seed, design=design, label=drop, stack=stack, graph=graph)


def _sample_dirname(i: int) -> str:
    return f"design_{i:04d}"


def write_sample(out_dir: Path, s: Sample) -> dict:
    d = out_dir / _sample_dirname(s.sample_id)
    d.mkdir(parents=True, exist_ok=True)
    (d / "design.json").write_text(s.design.to_json())
    write_gift(s.label, d / "label.gift")
    s.stack.save(d / "features.gift", d / "features.json")
    entry = {
        "id": s.sample_id,
        "seed": s.seed,
        "design": f"{_sample_dirname(s.sample_id)}/design.json",
        "label": f"{_sample_dirname(s.sample_id)}/label.gift",
        "features": f"{_sample_dirname(s.sample_id)}/features.gift",
        "features_meta": f"{_sample_dirname(s.sample_id)}/features.json",
        "graph": None,
    }
    if s.graph is not None:
        (d / "graph.json").write_text(s.graph.to_json())
        entry["graph"] = f"{_sample_dirname(s.sample_id)}/graph.json"
    return entry


def content_hash(out_dir: Path, entries: list[dict]) -> str:
    h = hashlib.sha256()
    for e in entries:
        for key in ("design", "label", "features", "features_meta", "graph"):
            if e.get(key):
                h.update(e[key].encode())
                h.update((out_dir / e[key]).read_bytes())
    return h.hexdigest()


def write_dataset(out_dir, cfg: ExperimentConfig, jobs: int = 1) -> Path:
    """Emit cfg.data.count + cfg.data.holdout designs plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = cfg.data.count + cfg.data.holdout
    seeds = derive_sample_seeds(cfg.data.seed, total)
    ids = list(range(total))
    if jobs > 1 and total > 1:
        import concurrent.futures as cf
        import functools

        with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
            samples = list(ex.map(functools.partial(_make_sample_job, cfg=cfg), ids, seeds))
    else:
        samples = [make_sample(i, s, cfg) for i, s in zip(ids, seeds)]
    entries = [write_sample(out, s) for s in samples]
    manifest = {
        "format": "irdiff-dataset",
        "version": 1,
        "train_count": cfg.data.count,
        "holdout_count": cfg.data.holdout,
        "samples": entries,
        "config": json.loads(cfg.to_json()),
        "content_hash": content_hash(out, entries),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out / "manifest.json"


def _make_sample_job(i: int, seed: int, cfg: ExperimentConfig) -> Sample:
    return make_sample(i, seed, cfg)


def derive_sample_seeds(master_seed: int, n: int) -> list[int]:
    stream = Rng(master_seed).stream("design")
    return [int(x) for x in stream.integers(0, 2**63, n)]


def load_dataset(manifest_path) -> tuple[list[Sample], list[Sample], dict]:
    """Returns (train samples, holdout samples, manifest)."""
    path = Path(manifest_path)
    base = path.parent
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("format") != "irdiff-dataset":
        raise ValueError(f"{path}: not a dataset manifest")
    samples = []
    for e in manifest["samples"]:
        stack = FeatureStack.load(base / e["features"], base / e["features_meta"])
        graph = DesignGraph.from_json((base / e["graph"]).read_text()) if e["graph"] else None
        samples.append(
            Sample(
                sample_id=e["id"],
                seed=e["seed"],
                design=None,
                label=read_gift(base / e["label"]),
                stack=stack,
                graph=graph,
            )
        )
    k = manifest["train_count"]
    return samples[:k], samples[k:], manifest


# -- training ------------------------------------------------------------


def build_model(cfg: ExperimentConfig, seed: int) -> ConditionalDenoiser:
    mc = cfg.model
    mc.n_tokens = cfg.graph.n_tokens
    mc.pool_mode = cfg.graph.pool_mode
    model = ConditionalDenoiser(mc)
    init_parameters(model, Rng(seed).stream("init"))
    return model


def _batch_tensors(samples: list[Sample], idx: np.ndarray, dtype, n_channels: int | None = None):
    x0 = torch.as_tensor(
        np.stack([dd.normalize_label(samples[i].label)[None] for i in idx]), dtype=dtype
    )
    cond_np = np.stack([samples[i].stack.tensor for i in idx])
    if n_channels is not None:
        cond_np = cond_np[:, :n_channels]
    cond = torch.as_tensor(cond_np, dtype=dtype)
    graphs = [samples[i].graph for i in idx]
    return x0, cond, graphs


def train_model(
    samples: list[Sample],
    cfg: ExperimentConfig,
    seed: int,
    log_path=None,
    ckpt_dir=None,
    resume_from=None,
    ckpt_every: int = 0,
) -> tuple[ConditionalDenoiser, dd.Ema, list[dict]]:
    """Run the training loop; randomness per step derives from (seed, step)."""
    sched = dd.make_schedule(cfg.diffusion.T, cfg.diffusion.kind)
    model = build_model(cfg, seed)
    ema = dd.Ema(model)
    opt = torch.optim.AdamW(
        model.parameters(), lr=cfg.train.lr, betas=cfg.train.betas,
        weight_decay=cfg.train.weight_decay,
    )
    start = 0
    if resume_from is not None:
        start = load_checkpoint(resume_from, model, ema, opt)
    use_graph = cfg.graph.use_graph
    n_ch = cfg.model.cond_channels
    rng = Rng(seed)
    records = []
    logf = open(log_path, "a") if log_path else None
    try:
        for step in range(start, cfg.train.n_steps):
            idx = np.asarray(rng.stream("batch", step).integers(0, len(samples), cfg.train.batch_size))
            x0, cond, graphs = _batch_tensors(samples, idx, model.cfg.torch_dtype, n_ch)
            if not use_graph:
                graphs = [None] * len(graphs)
            try:
                rec = dd.training_step(model, opt, ema, (x0, cond, graphs), sched, cfg.train, seed, step)
            except dd.NumericError:
                if ckpt_dir is not None:
                    # keep the last good checkpoint; do not overwrite
                    pass
                raise
            records.append(rec)
            if logf:
                logf.write(json.dumps(rec, sort_keys=True) + "\n")
            if ckpt_dir is not None and ckpt_every and (step + 1) % ckpt_every == 0:
                save_checkpoint(ckpt_dir, model, ema, opt, step + 1, json.loads(cfg.to_json()))
    finally:
        if logf:
            logf.close()
    if ckpt_dir is not None:
        save_checkpoint(ckpt_dir, model, ema, opt, cfg.train.n_steps, json.loads(cfg.to_json()))
    return model, ema, records


# -- sampling and evaluation ----------------------------------------------


def sample_maps(
    model: ConditionalDenoiser,
    samples: list[Sample],
    cfg: ExperimentConfig,
    seed: int,
    batch: int = 32,
) -> np.ndarray:
    """One generated map per design, deterministic per (seed, design id)."""
    sched = dd.make_schedule(cfg.diffusion.T, cfg.diffusion.kind)
    h, w = samples[0].label.shape
    outs = []
    model.eval()
    for lo in range(0, len(samples), batch):
        part = samples[lo : lo + batch]
        idx = np.arange(lo, lo + len(part))
        _, cond, graphs = _batch_tensors(samples, idx, model.cfg.torch_dtype, cfg.model.cond_channels)
        if not cfg.graph.use_graph:
            graphs = [None] * len(graphs)
        with torch.no_grad():
            tokens = model.batch_tokens(graphs)
        seeds = [sample_seed(seed, s.sample_id) for s in part]
        outs.append(dd.sample(model, cond, tokens, sched, seeds, (h, w)))
    return np.concatenate(outs, axis=0)


def sample_seed(master_seed: int, design_id: int) -> int:
    return int(Rng(master_seed).stream("sample", design_id).integers(0, 2**63))


def ema_model(model: ConditionalDenoiser, ema: dd.Ema) -> ConditionalDenoiser:
    import copy

    m = copy.deepcopy(model)
    ema.copy_to(m)
    return m


# -- visualization ---------------------------------------------------------

PANEL_GUTTER = 4
PANEL_FEATURES = ("p_all", "rudy", "c_den")


def _to_u8_norm(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    scaled = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)


def render_panels(noise: np.ndarray, stack: FeatureStack, generated: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Side-by-side RGB canvas: noise | feature composite | generated | truth."""
    h, w = truth.shape
    rgb_feat = np.stack([_to_u8_norm(stack.raw(name)) for name in PANEL_FEATURES], axis=-1)
    tiles = [
        np.repeat(_to_u8_norm(noise)[:, :, None], 3, axis=2),
        rgb_feat,
        np.repeat(_to_u8_norm(generated)[:, :, None], 3, axis=2),
        np.repeat(_to_u8_norm(truth)[:, :, None], 3, axis=2),
    ]
    canvas = np.full((h, 4 * w + 3 * PANEL_GUTTER, 3), 255, dtype=np.uint8)
    for k, tile in enumerate(tiles):
        x0 = k * (w + PANEL_GUTTER)
        canvas[:, x0 : x0 + w] = tile
    return canvas


def write_panels(path, sample: Sample, generated: np.ndarray, seed: int) -> None:
    h, w = sample.label.shape
    noise = Rng(sample_seed(seed, sample.sample_id)).stream("sample").normal((h, w))
    write_png_rgb(render_panels(noise, sample.stack, generated, sample.label), path)
