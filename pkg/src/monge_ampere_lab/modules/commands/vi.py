from helpers.helper import write_csv
from logger.logger import logger
from models.base.vi import VI_SWEEP_HEADER, VI_TRACE_HEADER
from models.config import RunConfig, VISettings
from modules.vi.vi import vi_run, vi_sweep


def cmd_vi(config: RunConfig) -> int:
    settings: VISettings = config.settings
    out = config.output_dir
    cfg = settings.vi_config(config.seed, config.quad_nodes)
    logger.section(f"vi ({cfg.target}, {cfg.expectation.mode} expectations, T={cfg.T})")

    records = vi_run(cfg)
    write_csv(out / "vi_trace.csv", VI_TRACE_HEADER, [r.row() for r in records])

    if settings.starts:
        rows = []
        for index, start_records in vi_sweep(cfg, settings.starts):
            rows.extend((index,) + r.row() for r in start_records)
        write_csv(out / "vi_sweep.csv", VI_SWEEP_HEADER, rows)
        logger.info(f"swept {len(settings.starts)} starting points")

    final = records[-1]
    logger.success(f"vi finished at k={final.state.k}: err1={final.err1:.3e}, err2={final.err2:.3e}")
    return 0
