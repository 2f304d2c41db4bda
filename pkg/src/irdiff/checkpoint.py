"""Checkpoints: ordered named tensors in a single .gift container + manifest.

Parameters, EMA shadow, and Adam moments are stored in f64 so a resumed run
continues bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .model import ConditionalDenoiser
from .tensorio import read_gift, write_gift

CKPT_VERSION = 1


def save_checkpoint(out_dir, model: ConditionalDenoiser, ema, optimizer, step: int, config_echo: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0

    def add_t(name: str, tensor: torch.Tensor) -> None:
        nonlocal offset
        arr = tensor.detach().to(torch.float64).cpu().numpy()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": int(arr.size)})
        chunks.append(arr.reshape(-1))
        offset += arr.size

    named = list(model.named_parameters())
    for n, p in named:
        add_t(f"param/{n}", p)
    for n, _ in named:
        add_t(f"ema/{n}", ema.shadow[n])
    if optimizer is not None:
        for n, p in named:
            state = optimizer.state.get(p, {})
            if "exp_avg" in state:
                add_t(f"adam_m/{n}", state["exp_avg"])
                add_t(f"adam_v/{n}", state["exp_avg_sq"])
                add_t(f"adam_step/{n}", torch.as_tensor(float(state["step"])))

    flat = np.concatenate(chunks) if chunks else np.zeros(0)
    write_gift(flat, out / "data.gift", dtype="f64")
    manifest = {
        "format": "irdiff-checkpoint",
        "version": CKPT_VERSION,
        "step": step,
        "entries": entries,
        "config": config_echo or {},
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def load_checkpoint(ckpt_dir, model: ConditionalDenoiser, ema=None, optimizer=None) -> int:
    """Restore parameters (and optionally EMA/Adam state); returns the step."""
    ckpt = Path(ckpt_dir)
    with open(ckpt / "manifest.json") as f:
        manifest = json.load(f)
    if manifest.get("format") != "irdiff-checkpoint":
        raise ValueError(f"{ckpt}: not a checkpoint")
    flat = read_gift(ckpt / "data.gift")
    table = {
        e["name"]: flat[e["offset"] : e["offset"] + e["length"]].reshape(e["shape"])
        for e in manifest["entries"]
    }
    named = dict(model.named_parameters())
    with torch.no_grad():
        for n, p in named.items():
            key = f"param/{n}"
            if key not in table:
                raise ValueError(f"checkpoint missing {key} (model/config mismatch?)")
            if list(p.shape) != list(table[key].shape):
                raise ValueError(f"shape mismatch for {n}: {list(p.shape)} vs {list(table[key].shape)}")
            p.copy_(torch.as_tensor(table[key], dtype=p.dtype))
        if ema is not None:
            for n in named:
                ema.shadow[n].copy_(torch.as_tensor(table[f"ema/{n}"], dtype=ema.shadow[n].dtype))
    if optimizer is not None and any(e["name"].startswith("adam_m/") for e in manifest["entries"]):
        for n, p in named.items():
            if f"adam_m/{n}" in table:
                optimizer.state[p] = {
                    "step": torch.as_tensor(float(table[f"adam_step/{n}"])),
                    "exp_avg": torch.as_tensor(table[f"adam_m/{n}"], dtype=p.dtype),
                    "exp_avg_sq": torch.as_tensor(table[f"adam_v/{n}"], dtype=p.dtype),
                }
    return int(manifest["step"])
