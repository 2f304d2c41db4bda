import numpy as np
import pytest
import torch

from irdiff import diffusion as dd
from irdiff.checkpoint import load_checkpoint, save_checkpoint
from irdiff.config import config_from_dict
from irdiff.model import ConditionalDenoiser, ModelConfig, init_parameters
from irdiff.pipeline import make_sample, train_model
from irdiff.rng import Rng

TINY = ModelConfig(
    channels=(8, 16), cond_channels=34, token_dim=8, n_tokens=4,
    heads=2, emb_dim=8, gn_groups=4, dtype="f64",
)


def _model(seed=0):
    m = ConditionalDenoiser(TINY)
    init_parameters(m, Rng(seed).stream("init"))
    return m


def _trained(tmp_path, steps=3):
    m = _model()
    ema = dd.Ema(m)
    opt = torch.optim.AdamW(m.parameters(), lr=1e-3)
    s = dd.make_schedule(8)
    cfg = config_from_dict({"data": {"grid_h": 16, "grid_w": 16, "n_instances": 15, "n_nets": 10}})
    sample = make_sample(0, 7, cfg)
    x0 = torch.as_tensor(dd.normalize_label(sample.label)[None, None], dtype=torch.float64)
    cond = torch.as_tensor(sample.stack.tensor[None], dtype=torch.float64)
    for k in range(steps):
        dd.training_step(m, opt, ema, (x0, cond, [sample.graph]), s, dd.TrainConfig(), seed=1, step=k)
    return m, ema, opt


def test_roundtrip_bit_exact(tmp_path):
    m, ema, opt = _trained(tmp_path)
    save_checkpoint(tmp_path / "ck", m, ema, opt, step=3, config_echo={"x": 1})

    m2 = _model(seed=99)  # different init, fully overwritten on load
    ema2 = dd.Ema(m2)
    opt2 = torch.optim.AdamW(m2.parameters(), lr=1e-3)
    step = load_checkpoint(tmp_path / "ck", m2, ema2, opt2)
    assert step == 3
    for (n, p), (_, q) in zip(m.named_parameters(), m2.named_parameters()):
        assert torch.equal(p, q), n
        assert torch.equal(ema.shadow[n], ema2.shadow[n]), n
    # params never touched by a gradient (e.g. unused null embeddings) carry
    # no Adam state; the stateful set must match exactly
    restored = 0
    for p, q in zip(m.parameters(), m2.parameters()):
        sa, sb = opt.state.get(p, {}), opt2.state.get(q, {})
        assert ("exp_avg" in sa) == ("exp_avg" in sb)
        if "exp_avg" in sa:
            restored += 1
            assert torch.equal(sa["exp_avg"], sb["exp_avg"])
            assert torch.equal(sa["exp_avg_sq"], sb["exp_avg_sq"])
            assert float(sa["step"]) == float(sb["step"])
    assert restored > 0


def test_shape_mismatch_rejected(tmp_path):
    m, ema, opt = _trained(tmp_path)
    save_checkpoint(tmp_path / "ck", m, ema, opt, step=1)
    other = ConditionalDenoiser(
        ModelConfig(channels=(4, 8), cond_channels=34, token_dim=8, n_tokens=4,
                    heads=2, emb_dim=8, gn_groups=4, dtype="f64")
    )
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "ck", other)


def test_not_a_checkpoint(tmp_path):
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path, _model())


def test_resume_bit_exact(tmp_path):
    """Training N steps straight equals N/2 steps + checkpoint + resume."""
    cfg = config_from_dict(
        {
            "data": {"count": 2, "grid_h": 16, "grid_w": 16, "n_instances": 12, "n_nets": 8, "seed": 3},
            "diffusion": {"T": 8},
            "train": {"n_steps": 4, "batch_size": 2},
            "model": {
                "channels": [8, 16], "token_dim": 8, "emb_dim": 8,
                "gn_groups": 4, "heads": 2, "dtype": "f64",
            },
        }
    )
    from irdiff.pipeline import derive_sample_seeds

    seeds = derive_sample_seeds(cfg.data.seed, 2)
    samples = [make_sample(i, s, cfg) for i, s in enumerate(seeds)]

    m_full, ema_full, _ = train_model(samples, cfg, cfg.data.seed)

    # first half
    cfg.train.n_steps = 2
    m_a, ema_a, _ = train_model(samples, cfg, cfg.data.seed, ckpt_dir=tmp_path / "ck")
    # resume to 4
    cfg.train.n_steps = 4
    m_b, ema_b, _ = train_model(samples, cfg, cfg.data.seed, resume_from=tmp_path / "ck")

    for (n, p), (_, q) in zip(m_full.named_parameters(), m_b.named_parameters()):
        assert torch.equal(p, q), f"param {n} differs after resume"
        assert torch.equal(ema_full.shadow[n], ema_b.shadow[n]), f"ema {n} differs"
