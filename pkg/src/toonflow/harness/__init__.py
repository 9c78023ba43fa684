from toonflow.harness.metrics import MetricsReport, evaluate, frame_psnr, masked_region_psnr, psnr
from toonflow.harness.train import (
    PAPER_PRESET,
    TrainConfig,
    TrainResult,
    adapt_cartoon,
    build_batch,
    data_order_hash,
    load_model,
    pretrain_base,
    validation_loss,
)
from toonflow.harness.ablate import ScheduleRecord, format_table, run_ablation, write_report
