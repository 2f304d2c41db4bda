"""Conditional denoiser: GCN token encoder + FiLM U-Net + gated cross-attention.

The network predicts the noise added to a [-1,1]-normalized drop map. The
1-channel noisy map is the only direct input; geometry conditioning enters
through spatially varying FiLM after each second GroupNorm (time conditioning
after each first GroupNorm), and netlist tokens enter through zero-gated
cross-attention at the bottleneck and the first decoder level. With all gates
at zero the network is exactly a geometry-only denoiser.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .features import N_CHANNELS
from .graph import DesignGraph, normalize_node_features
from .rng import Stream


@dataclass
class ModelConfig:
    channels: tuple[int, ...] = (32, 64, 128)
    cond_channels: int = N_CHANNELS
    token_dim: int = 64
    n_tokens: int = 32
    pool_mode: str = "topk"  # topk | mean
    heads: int = 4
    emb_dim: int = 64
    gn_groups: int = 8
    dtype: str = "f32"  # f64 available for gradient checking

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "f64" else torch.float32


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal timestep embedding, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / half
    )
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


def normalized_adjacency(graph: DesignGraph) -> np.ndarray:
    """Symmetric degree-normalized adjacency with self-loops."""
    a = graph.adjacency() + np.eye(graph.n_nodes)
    d = a.sum(axis=1)
    dinv = 1.0 / np.sqrt(d)
    return a * dinv[:, None] * dinv[None, :]


class GcnEncoder(nn.Module):
    """Two-layer GCN: ReLU on layer 1, identity on layer 2."""

    def __init__(self, in_dim: int = 7, hidden: int = 64, out_dim: int = 64):
        super().__init__()
        self.lin1 = nn.Linear(in_dim, hidden)
        self.lin2 = nn.Linear(hidden, out_dim)

    def forward(self, x: torch.Tensor, a_norm: torch.Tensor) -> torch.Tensor:
        if x.shape[0] == 0:
            raise ValueError("empty graph")
        h = F.relu(a_norm @ self.lin1(x))
        return a_norm @ self.lin2(h)


def _degree_order(degrees: np.ndarray) -> np.ndarray:
    """Node order by (degree desc, index asc)."""
    idx = np.arange(len(degrees))
    return np.lexsort((idx, -np.asarray(degrees)))


def pool_tokens(h: torch.Tensor, degrees: np.ndarray, k: int, mode: str = "topk") -> torch.Tensor:
    """Compress node embeddings into exactly k tokens.

    topk: embeddings of the k highest-degree nodes (ties: lower index first);
    short graphs are padded with the mean embedding. mean: degree-sorted
    contiguous buckets, one mean per bucket (empty buckets fall back to the
    global mean).
    """
    if k < 1:
        raise ValueError("need at least one token")
    n = h.shape[0]
    order = _degree_order(degrees)
    mean_row = h.mean(dim=0, keepdim=True)
    if mode == "topk":
        take = torch.as_tensor(order[: min(n, k)].copy(), device=h.device)
        tokens = h[take]
        if n < k:
            tokens = torch.cat([tokens, mean_row.expand(k - n, -1)], dim=0)
        return tokens
    if mode == "mean":
        rows = []
        for bucket in np.array_split(order, k):
            if len(bucket) == 0:
                rows.append(mean_row[0])
            else:
                rows.append(h[torch.as_tensor(bucket.copy(), device=h.device)].mean(dim=0))
        return torch.stack(rows, dim=0)
    raise ValueError(f"unknown pooling mode {mode!r}")


class FilmResBlock(nn.Module):
    """conv-GN-(time FiLM)-SiLU-conv-GN-(geometry FiLM)-SiLU with skip.

    Both FiLM branches use the 1+gamma parameterization and zero-initialized
    output layers, so a fresh block applies identity modulation.
    """

    def __init__(self, in_ch: int, out_ch: int, emb_dim: int, cond_ch: int, groups: int):
        super().__init__()
        g = groups if out_ch % groups == 0 else 1
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.gn1 = nn.GroupNorm(g, out_ch)
        self.time_mlp = nn.Linear(emb_dim, 2 * out_ch)
        self.time_mlp._zero_init = True
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.gn2 = nn.GroupNorm(g, out_ch)
        self.geom_hidden = nn.Conv2d(cond_ch, out_ch, 1)
        self.geom_out = nn.Conv2d(out_ch, 2 * out_ch, 1)
        self.geom_out._zero_init = True
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor, x_cond: torch.Tensor) -> torch.Tensor:
        h = self.gn1(self.conv1(x))
        gt, bt = self.time_mlp(t_emb).chunk(2, dim=1)
        h = h * (1.0 + gt[:, :, None, None]) + bt[:, :, None, None]
        h = F.silu(h)
        h = self.gn2(self.conv2(h))
        gx, bx = self.geom_out(F.silu(self.geom_hidden(x_cond))).chunk(2, dim=1)
        h = h * (1.0 + gx) + bx
        h = F.silu(h)
        return h + self.skip(x)


class GatedCrossAttention(nn.Module):
    """Spatial features attend to tokens; residual scaled by tanh(gate)."""

    def __init__(self, channels: int, token_dim: int, heads: int = 4):
        super().__init__()
        if channels % heads != 0:
            raise ValueError(f"heads ({heads}) must divide channel width ({channels})")
        self.heads = heads
        self.ln_q = nn.LayerNorm(channels)
        self.ln_t = nn.LayerNorm(token_dim)
        self.to_q = nn.Linear(channels, channels)
        self.to_k = nn.Linear(token_dim, channels)
        self.to_v = nn.Linear(token_dim, channels)
        self.proj = nn.Linear(channels, channels)
        self.gate = nn.Parameter(torch.zeros(()))

    def attention(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """Raw attention update, shape (B, C, H, W)."""
        bsz, c, hh, ww = x.shape
        q = self.ln_q(x.reshape(bsz, c, hh * ww).transpose(1, 2))
        tn = self.ln_t(tokens)
        hd = c // self.heads

        def split(v):
            return v.reshape(bsz, -1, self.heads, hd).transpose(1, 2)

        q = split(self.to_q(q))
        k = split(self.to_k(tn))
        v = split(self.to_v(tn))
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(hd), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bsz, hh * ww, c)
        out = self.proj(out)
        return out.transpose(1, 2).reshape(bsz, c, hh, ww)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return x + torch.tanh(self.gate) * self.attention(x, tokens)


class ConditionalDenoiser(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        ch = cfg.channels
        self.n_levels = len(ch)
        emb = cfg.emb_dim

        self.gcn = GcnEncoder(7, cfg.token_dim, cfg.token_dim)
        self.null_token = nn.Parameter(torch.zeros(cfg.token_dim))
        self.null_cond = nn.Parameter(torch.zeros(cfg.cond_channels))

        self.time_lin1 = nn.Linear(emb, emb)
        self.time_lin2 = nn.Linear(emb, emb)

        self.stem = nn.Conv2d(1, ch[0], 3, padding=1)
        self.enc_blocks = nn.ModuleList(
            [FilmResBlock(ch[i], ch[i], emb, cfg.cond_channels, cfg.gn_groups) for i in range(self.n_levels - 1)]
        )
        self.downs = nn.ModuleList(
            [nn.Conv2d(ch[i], ch[i + 1], 3, stride=2, padding=1) for i in range(self.n_levels - 1)]
        )
        self.mid_block1 = FilmResBlock(ch[-1], ch[-1], emb, cfg.cond_channels, cfg.gn_groups)
        self.mid_attn = GatedCrossAttention(ch[-1], cfg.token_dim, cfg.heads)
        self.mid_block2 = FilmResBlock(ch[-1], ch[-1], emb, cfg.cond_channels, cfg.gn_groups)

        self.ups = nn.ModuleList(
            [nn.Conv2d(ch[i + 1], ch[i], 3, padding=1) for i in reversed(range(self.n_levels - 1))]
        )
        self.dec_blocks = nn.ModuleList(
            [FilmResBlock(2 * ch[i], ch[i], emb, cfg.cond_channels, cfg.gn_groups) for i in reversed(range(self.n_levels - 1))]
        )
        # One cross-attention at the first (lowest-resolution) decoder level.
        self.dec_attn = GatedCrossAttention(ch[self.n_levels - 2], cfg.token_dim, cfg.heads)

        g = cfg.gn_groups if ch[0] % cfg.gn_groups == 0 else 1
        self.head_norm = nn.GroupNorm(g, ch[0])
        self.head = nn.Conv2d(ch[0], 1, 3, padding=1)
        self.head._zero_init = True

        self.to(cfg.torch_dtype)

    # -- conditioning inputs -------------------------------------------

    def encode_graph(self, graph: DesignGraph) -> torch.Tensor:
        """Graph -> K x D tokens (differentiable through the GCN)."""
        feats = normalize_node_features(graph.node_features)
        x = torch.as_tensor(feats, dtype=self.cfg.torch_dtype)
        a = torch.as_tensor(normalized_adjacency(graph), dtype=self.cfg.torch_dtype)
        h = self.gcn(x, a)
        return pool_tokens(h, graph.degrees(), self.cfg.n_tokens, self.cfg.pool_mode)

    def null_tokens(self) -> torch.Tensor:
        return self.null_token[None, :].expand(self.cfg.n_tokens, -1)

    def batch_tokens(self, graphs: list[DesignGraph | None]) -> torch.Tensor:
        rows = [self.encode_graph(g) if g is not None else self.null_tokens() for g in graphs]
        return torch.stack(rows, dim=0)

    def null_cond_map(self, bsz: int, h: int, w: int) -> torch.Tensor:
        return self.null_cond[None, :, None, None].expand(bsz, -1, h, w)

    # -- denoising forward pass ----------------------------------------

    def time_embedding(self, t: torch.Tensor) -> torch.Tensor:
        emb = sinusoidal_embedding(t.to(self.cfg.torch_dtype), self.cfg.emb_dim)
        return self.time_lin2(F.silu(self.time_lin1(emb)))

    def forward(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        cond: torch.Tensor | None,
        tokens: torch.Tensor | None,
    ) -> torch.Tensor:
        bsz, _, hh, ww = x_t.shape
        stride = 2 ** (self.n_levels - 1)
        if hh % stride or ww % stride:
            raise ValueError(f"resolution {hh}x{ww} not divisible by {stride}")
        if cond is None:
            cond = self.null_cond_map(bsz, hh, ww)
        if tokens is None:
            tokens = self.null_tokens()[None].expand(bsz, -1, -1)

        # Feature pyramid: area-averaged conditioning at each resolution.
        pyramid = [cond]
        for _ in range(self.n_levels - 1):
            pyramid.append(F.avg_pool2d(pyramid[-1], 2))

        t_emb = self.time_embedding(t)
        h = self.stem(x_t)
        skips = []
        for lvl in range(self.n_levels - 1):
            h = self.enc_blocks[lvl](h, t_emb, pyramid[lvl])
            skips.append(h)
            h = self.downs[lvl](h)

        h = self.mid_block1(h, t_emb, pyramid[-1])
        h = self.mid_attn(h, tokens)
        h = self.mid_block2(h, t_emb, pyramid[-1])

        for di, lvl in enumerate(reversed(range(self.n_levels - 1))):
            h = self.ups[di](F.interpolate(h, scale_factor=2, mode="nearest"))
            h = self.dec_blocks[di](torch.cat([h, skips[lvl]], dim=1), t_emb, pyramid[lvl])
            if di == 0:
                h = self.dec_attn(h, tokens)

        return self.head(F.silu(self.head_norm(h)))


def init_parameters(model: nn.Module, stream: Stream) -> None:
    """Deterministic parameter init from a labeled random stream.

    Gates and layers marked _zero_init start at exactly zero; norms start at
    identity; everything else is fan-in-scaled normal.
    """
    zero_modules = {id(m) for m in model.modules() if getattr(m, "_zero_init", False)}
    param_owner = {}
    for m in model.modules():
        for p in m.parameters(recurse=False):
            param_owner[id(p)] = m
    with torch.no_grad():
        for name, p in model.named_parameters():
            owner = param_owner.get(id(p))
            if name.endswith("gate") or (owner is not None and id(owner) in zero_modules):
                p.zero_()
            elif isinstance(owner, (nn.GroupNorm, nn.LayerNorm)):
                p.fill_(1.0 if "weight" in name else 0.0)
            elif name.endswith("null_token") or name.endswith("null_cond"):
                p.copy_(torch.as_tensor(0.1 * stream.normal(tuple(p.shape)), dtype=p.dtype))
            elif p.dim() >= 2:
                fan_in = int(np.prod(p.shape[1:]))
                w = stream.normal(tuple(p.shape)) / math.sqrt(fan_in)
                p.copy_(torch.as_tensor(w, dtype=p.dtype))
            else:
                p.zero_()


def parameter_groups(model: nn.Module) -> dict[str, torch.Tensor]:
    """Named parameters in registration order (checkpoint layout)."""
    return dict(model.named_parameters())
