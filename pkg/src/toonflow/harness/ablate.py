"""Adapter-variant ablation under a bit-identical schedule."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from toonflow.errors import ContractError
from toonflow.harness.train import TrainConfig, adapt_cartoon, data_order_hash, load_model, validation_loss
from toonflow.slra import (
    AdapterVariantConfig,
    linear_param_count,
    lora_param_count,
    param_match,
    slra_param_count,
)

DEFAULT_VARIANTS = ("slra", "temporal", "spatiotemporal", "linear", "lora")


@dataclass(frozen=True)
class ScheduleRecord:
    """Everything that must be identical across ablation legs."""

    steps: int
    lr: float
    batch_size: int
    seed: int
    data_hash: str


def variant_configs(slra_rank: int, D: int, blocks: int) -> list[AdapterVariantConfig]:
    matched = param_match(D, blocks, slra_rank)
    return [AdapterVariantConfig(k, matched if k == "lora" else slra_rank) for k in DEFAULT_VARIANTS]


def count_for(variant: AdapterVariantConfig, D: int, blocks: int) -> int:
    if variant.kind == "lora":
        return blocks * lora_param_count(D, variant.rank)
    if variant.kind == "linear":
        return blocks * linear_param_count(D, variant.rank)
    return blocks * slra_param_count(D, variant.rank)


def run_ablation(cfg: TrainConfig, base_checkpoint: str | Path,
                 slra_rank: int = 8) -> tuple[list[dict], ScheduleRecord]:
    """Train every variant with the same data order, steps, and lr; emit a table.

    The schedule record is computed once and re-asserted per leg; any drift is
    a protocol violation, not a quality difference.
    """
    if cfg.phase != "adapt":
        raise ContractError("ablation runs in the adapt phase")
    schedule = ScheduleRecord(cfg.steps, cfg.lr, cfg.batch_size, cfg.seed, data_order_hash(cfg))
    rows = []
    for variant in variant_configs(slra_rank, cfg.dit.D, cfg.dit.blocks):
        leg_cfg = replace(cfg, adapter=variant,
                          out_dir=str(Path(cfg.out_dir) / f"ablate-{variant.kind}"))
        leg_schedule = ScheduleRecord(leg_cfg.steps, leg_cfg.lr, leg_cfg.batch_size,
                                      leg_cfg.seed, data_order_hash(leg_cfg))
        if leg_schedule != schedule:
            raise ContractError(f"schedule drift in variant {variant.kind}: {leg_schedule} != {schedule}")
        result = adapt_cartoon(leg_cfg, base_checkpoint, resume=False)
        model = load_model(base_checkpoint, result.checkpoint)
        rows.append({
            "variant": variant.kind,
            "rank": variant.rank,
            "params": count_for(variant, cfg.dit.D, cfg.dit.blocks),
            "final_train_loss": float(sum(result.losses[-10:]) / max(1, len(result.losses[-10:]))),
            "val_loss": validation_loss(model, leg_cfg, "cartoon", with_sketches=True, batches=3),
            "schedule": leg_schedule.__dict__,
        })
    return rows, schedule


def format_table(rows: list[dict]) -> str:
    head = f"{'variant':<16}{'rank':>6}{'params':>10}{'train loss':>14}{'val loss':>12}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['variant']:<16}{r['rank']:>6}{r['params']:>10}"
                     f"{r['final_train_loss']:>14.4f}{r['val_loss']:>12.4f}")
    return "\n".join(lines)


def write_report(rows: list[dict], schedule: ScheduleRecord, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonl = out / "ablation.jsonl"
    with open(jsonl, "w") as f:
        f.write(json.dumps({"schedule": schedule.__dict__}) + "\n")
        for r in rows:
            f.write(json.dumps(r) + "\n")
    (out / "ablation.txt").write_text(format_table(rows) + "\n")
    return jsonl
