"""Command-line entry points.

Exit codes: 0 success, 2 configuration/contract error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from toonflow.backbone.config import DiTConfig, load_config
from toonflow.backbone.patches import ReferenceSet
from toonflow.control import SketchKeyframe, full_mask
from toonflow.errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    NumericsError,
    ToonflowError,
    TrainingError,
)
from toonflow.flow import generate
from toonflow.harness.ablate import run_ablation, write_report
from toonflow.harness.metrics import evaluate
from toonflow.harness.train import TrainConfig, adapt_cartoon, load_model, pretrain_base
from toonflow.imaging import png_bytes_to_frame, rle_to_mask, save_clip_pngs, save_gif
from toonflow.slra import AdapterVariantConfig
from toonflow.toydata.captions import tokenize
from toonflow.toydata.dataset import build_benchmark, read_manifest, write_manifest


def _dit_from_args(args) -> DiTConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return DiTConfig()


def cmd_data_build(args) -> int:
    cfg = _dit_from_args(args)
    bench = build_benchmark(args.n, args.seed, {args.train_seed}, cfg)
    write_manifest(bench, args.seed, args.out)
    if args.materialize:
        from toonflow.imaging import frame_to_png_bytes
        root = Path(args.materialize)
        for i, b in enumerate(bench):
            d = root / f"sample_{i:03d}"
            save_clip_pngs(b.sample.frames, d)
            for j in b.sketch_indices:
                (d / f"sketch_{j:03d}.png").write_bytes(frame_to_png_bytes(b.sample.sketch(j, b.style)))
    print(f"wrote {len(bench)} benchmark samples to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = TrainConfig(phase="base", dit=_dit_from_args(args), steps=args.steps,
                      batch_size=args.batch, lr=args.lr, seed=args.seed,
                      data_size=args.data_size, out_dir=args.out)
    result = pretrain_base(cfg)
    print(f"base checkpoint: {result.checkpoint} (final loss {result.losses[-1]:.4f})")
    return 0


def cmd_adapt(args) -> int:
    cfg = TrainConfig(phase="adapt", dit=_dit_from_args(args), steps=args.steps,
                      batch_size=args.batch, lr=args.lr, seed=args.seed,
                      data_size=args.data_size, p_mask=args.p_mask, out_dir=args.out,
                      base_checkpoint=args.base,
                      adapter=AdapterVariantConfig(args.variant, args.rank))
    result = adapt_cartoon(cfg)
    print(f"adapter checkpoint: {result.checkpoint} (final loss {result.losses[-1]:.4f})")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.base, args.adapter)
    bench = read_manifest(args.manifest, model.config)
    report, rows = evaluate(model, bench, steps=args.steps, seed=args.seed, alpha=args.alpha)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")
    print(report.table())
    return 0


def _parse_sketch_arg(text: str, H: int, W: int) -> SketchKeyframe:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"sketch must be idx:lineart.png[:mask] got {text!r}")
    idx = int(parts[0])
    lineart = png_bytes_to_frame(Path(parts[1]).read_bytes(), channels=1)
    if len(parts) == 3:
        raw = parts[2]
        if raw.endswith(".png"):
            mask = png_bytes_to_frame(Path(raw).read_bytes(), channels=1)[:, :, 0]
        else:
            mask = rle_to_mask(raw)
    else:
        mask = full_mask(H, W)
    return SketchKeyframe(idx, lineart, mask)


def cmd_generate(args) -> int:
    model = load_model(args.base, args.adapter)
    c = model.config
    ref = png_bytes_to_frame(Path(args.ref).read_bytes(), channels=3)
    refs = ReferenceSet([(0, ref)])
    sketches = [_parse_sketch_arg(s, c.H, c.W) for s in args.sketch]
    ids = tokenize(args.prompt, c.prompt_len)
    clip = generate(model, refs, sketches, ids, alpha=args.alpha, steps=args.steps, seed=args.seed)
    out = Path(args.out)
    save_clip_pngs(clip.frames, out)
    save_gif(clip.frames, out / "preview.gif")
    print(f"wrote {c.K} frames + preview.gif to {out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = TrainConfig(phase="adapt", dit=_dit_from_args(args), steps=args.steps,
                      batch_size=args.batch, lr=args.lr, seed=args.seed,
                      data_size=args.data_size, out_dir=args.out, base_checkpoint=args.base,
                      adapter=AdapterVariantConfig("slra", args.rank))
    rows, schedule = run_ablation(cfg, args.base, slra_rank=args.rank)
    path = write_report(rows, schedule, args.out)
    print((Path(args.out) / "ablation.txt").read_text())
    print(f"report: {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from toonflow.service.app import create_app

    app = create_app(args.checkpoint_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toonflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="dataset utilities")
    data_sub = data.add_subparsers(dest="data_command", required=True)
    b = data_sub.add_parser("build", help="build a benchmark manifest")
    b.add_argument("--out", required=True)
    b.add_argument("--n", type=int, default=30)
    b.add_argument("--seed", type=int, default=7777)
    b.add_argument("--train-seed", type=int, default=0)
    b.add_argument("--config")
    b.add_argument("--materialize", help="also write PNG frames to this directory")
    b.set_defaults(fn=cmd_data_build)

    pre = sub.add_parser("pretrain", help="train the base image-to-video model")
    pre.add_argument("--out", required=True)
    pre.add_argument("--steps", type=int, default=500)
    pre.add_argument("--batch", type=int, default=4)
    pre.add_argument("--lr", type=float, default=2e-3)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--data-size", type=int, default=2000)
    pre.add_argument("--config")
    pre.set_defaults(fn=cmd_pretrain)

    ad = sub.add_parser("adapt", help="adapt a frozen base to the cartoon domain")
    ad.add_argument("--base", required=True)
    ad.add_argument("--out", required=True)
    ad.add_argument("--variant", default="slra",
                    choices=["slra", "temporal", "spatiotemporal", "linear", "lora"])
    ad.add_argument("--rank", type=int, default=8)
    ad.add_argument("--steps", type=int, default=2000)
    ad.add_argument("--batch", type=int, default=4)
    ad.add_argument("--lr", type=float, default=2e-3)
    ad.add_argument("--seed", type=int, default=0)
    ad.add_argument("--data-size", type=int, default=2000)
    ad.add_argument("--p-mask", type=float, default=0.5)
    ad.add_argument("--config")
    ad.set_defaults(fn=cmd_adapt)

    ev = sub.add_parser("eval", help="score a checkpoint on a benchmark manifest")
    ev.add_argument("--base", required=True)
    ev.add_argument("--adapter")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--steps", type=int, default=20)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--alpha", type=float, default=1.0)
    ev.set_defaults(fn=cmd_eval)

    g = sub.add_parser("generate", help="generate a clip from a reference and sketches")
    g.add_argument("--base", required=True)
    g.add_argument("--adapter")
    g.add_argument("--ref", required=True, help="reference frame PNG (temporal index 0)")
    g.add_argument("--sketch", action="append", required=True,
                   help="idx:lineart.png[:mask.png|RLE], repeatable")
    g.add_argument("--prompt", default="red square moves right")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--steps", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    ab = sub.add_parser("ablate", help="run the adapter-variant comparison")
    ab.add_argument("--base", required=True)
    ab.add_argument("--out", required=True)
    ab.add_argument("--rank", type=int, default=8)
    ab.add_argument("--steps", type=int, default=200)
    ab.add_argument("--batch", type=int, default=4)
    ab.add_argument("--lr", type=float, default=2e-3)
    ab.add_argument("--seed", type=int, default=0)
    ab.add_argument("--data-size", type=int, default=2000)
    ab.add_argument("--config")
    ab.set_defaults(fn=cmd_ablate)

    sv = sub.add_parser("serve", help="run the HTTP generation service")
    sv.add_argument("--checkpoint-dir", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8765)
    sv.set_defaults(fn=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ContractError, DimensionError, CheckpointError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NumericsError, TrainingError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except ToonflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
