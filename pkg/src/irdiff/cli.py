"""Pipeline driver: gen / features / graph / solve / train / sample / eval.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _setup_logging() -> None:
    level = os.environ.get("GIF_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")


def _load_config(args):
    from .config import ExperimentConfig, load_config

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.data.seed = args.seed
    return cfg


def _echo_config(out_dir: Path, cfg) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(cfg.to_json())


def cmd_gen(args) -> int:
    from .pipeline import write_dataset

    cfg = _load_config(args)
    out = Path(args.out)
    _echo_config(out, cfg)
    manifest = write_dataset(out, cfg, jobs=args.jobs)
    print(f"wrote dataset manifest {manifest}")
    return EXIT_OK


def cmd_features(args) -> int:
    from .design import SyntheticDesign
    from .features import build_feature_stack

    design = SyntheticDesign.from_json(Path(args.design).read_text())
    stack = build_feature_stack(design)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stack.save(out.with_suffix(".gift"), out.with_suffix(".json"))
    print(f"wrote {out.with_suffix('.gift')} (+ sidecar)")
    return EXIT_OK


def cmd_graph(args) -> int:
    from .design import SyntheticDesign
    from .graph import DegenerateDesignError, build_graph, netlist_from_design

    design = SyntheticDesign.from_json(Path(args.design).read_text())
    attrs, placement = netlist_from_design(design)
    try:
        g = build_graph(attrs, placement)
    except DegenerateDesignError as e:
        print(f"graph skipped: {e}", file=sys.stderr)
        return EXIT_DATA
    Path(args.out).write_text(g.to_json())
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    from .design import SyntheticDesign
    from .features import build_feature_stack
    from .pdn import assemble_system, effective_current, effective_resistance, solve_ir
    from .tensorio import write_gift, write_pgm, write_png

    design = SyntheticDesign.from_json(Path(args.design).read_text())
    stack = build_feature_stack(design)
    system = assemble_system(design, effective_resistance(design, stack), effective_current(design, stack))
    drop = solve_ir(system, design.vdd, method=args.method)
    write_gift(drop, args.out)
    if args.png:
        write_png(drop, args.png)
    if args.pgm:
        write_pgm(drop, args.pgm)
    print(f"wrote {args.out} (max drop {drop.max():.4f} of vdd)")
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import load_dataset, train_model

    cfg = _load_config(args)
    train, _, _ = load_dataset(Path(args.data) / "manifest.json")
    out = Path(args.out)
    _echo_config(out, cfg)
    model, ema, records = train_model(
        train,
        cfg,
        cfg.data.seed,
        log_path=out / "train_log.jsonl",
        ckpt_dir=out / "checkpoint",
        resume_from=args.resume,
        ckpt_every=args.ckpt_every,
    )
    last = records[-1] if records else {}
    print(f"trained {len(records)} steps; final loss {last.get('loss')}")
    return EXIT_OK


def _sample_and_eval(args, do_eval: bool) -> int:
    from . import diffusion as dd
    from .checkpoint import load_checkpoint
    from .metrics import evaluate_all
    from .pipeline import build_model, load_dataset, sample_maps, write_panels
    from .tensorio import write_gift

    cfg = _load_config(args)
    train, holdout, _ = load_dataset(Path(args.data) / "manifest.json")
    samples = holdout if holdout else train
    model = build_model(cfg, cfg.data.seed)
    ema = dd.Ema(model)
    load_checkpoint(args.checkpoint, model, ema)
    ema.copy_to(model)  # EMA weights are used for evaluation
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(out, cfg)
    maps = sample_maps(model, samples, cfg, cfg.data.seed)
    for s, m in zip(samples, maps):
        write_gift(m, out / f"generated_{s.sample_id:04d}.gift")
        write_panels(out / f"panels_{s.sample_id:04d}.png", s, m, cfg.data.seed)
    if do_eval:
        report = evaluate_all([(m, s.label) for s, m in zip(samples, maps)], config=json.loads(cfg.to_json()))
        (out / "eval_report.json").write_text(report.to_json())
        (out / "eval_report.csv").write_text("\n".join(report.csv_rows()) + "\n")
        agg = {k: round(v, 6) for k, v in report.aggregate.items()}
        print(f"evaluated {report.n_samples} samples: {agg}")
    else:
        print(f"sampled {len(samples)} maps into {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    return _sample_and_eval(args, do_eval=False)


def cmd_eval(args) -> int:
    return _sample_and_eval(args, do_eval=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irdiff", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", type=str, default=None)
            sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    common(g)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(fn=cmd_gen)

    f = sub.add_parser("features", help="build the 34-channel stack for one design")
    f.add_argument("--design", required=True)
    common(f, config=False)
    f.set_defaults(fn=cmd_features)

    gr = sub.add_parser("graph", help="build the netlist graph for one design")
    gr.add_argument("--design", required=True)
    common(gr, config=False)
    gr.set_defaults(fn=cmd_graph)

    sv = sub.add_parser("solve", help="solve the ground-truth drop map for one design")
    sv.add_argument("--design", required=True)
    sv.add_argument("--method", choices=["cg", "direct-dense"], default="cg")
    sv.add_argument("--png", default=None)
    sv.add_argument("--pgm", default=None)
    common(sv, config=False)
    sv.set_defaults(fn=cmd_solve)

    t = sub.add_parser("train", help="train the conditional denoiser")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--resume", default=None)
    t.add_argument("--ckpt-every", type=int, default=0)
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="generate one map per held-out design")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(fn=cmd_sample)

    e = sub.add_parser("eval", help="sample and score against ground truth")
    common(e)
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(fn=cmd_eval)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    from .config import ConfigError
    from .design import DesignError
    from .diffusion import NumericError
    from .graph import GraphError
    from .pdn import SolveError
    from .tensorio import GiftError

    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DesignError, GraphError, GiftError, FileNotFoundError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, SolveError) as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
