from pathlib import Path
from typing import List
import numpy as np
from helpers.helper import dump_json, make_rng, write_csv
from logger.logger import logger
from models.base.flow import (
    CONSTANTS_HEADER,
    DISTILL_HEADER,
    PROFILE_HEADER,
    TRACE_HEADER,
    FlowConfig,
    FlowTrace,
    Learner,
)
from models.base.schedule import LastIterateSchedule
from models.config import FlowMode, FlowSettings, RunConfig
from modules.divergence.mmd import mmd_permutation_test
from modules.flow.diagnostics import average_iterate_bound, bregman_bg_potential, regret_report
from modules.flow.flow import block_refresh_run, flow_run
from modules.flow.targets import Target1D, build_target, optimal_map
from modules.neural.learners import StudentResidual
from modules.neural.network import dump_weights
from modules.potential.potential import PotentialStack

FINAL_MAP_HEADER = ("y", "psi_prime", "psi_star_prime")
HISTOGRAM_HEADER = ("bin_left", "bin_right", "model_density", "target_density")

# stream indices for the post-run sampling
_HISTOGRAM_MODEL = 21
_HISTOGRAM_TARGET = 22
_PERMUTATION = 23


def with_measured_b0(cfg: FlowConfig, target: Target1D, reference: Target1D) -> FlowConfig:
    """Replaces the last-iterate schedule's B0 by B_G(e^{-f} | rho_0) of the initial iterate."""
    psi0 = PotentialStack.identity(cfg.base_coefficient)
    b0 = bregman_bg_potential(psi0, optimal_map(reference, target), reference, cfg.quad)
    if not b0 > 0:
        logger.warning(f"measured B0 = {b0:.3e} is not positive; keeping B0 = {cfg.schedule.B0}")
        return cfg
    logger.info(f"measured B0 = {b0:.6f}")
    return cfg.with_updates(schedule=cfg.schedule.model_copy(update={"B0": b0}))


def run_flow(settings: FlowSettings, cfg: FlowConfig) -> FlowTrace:
    if settings.mode is FlowMode.BLOCKS:
        return block_refresh_run(cfg)
    return flow_run(cfg)


def final_map_rows(trace: FlowTrace, cfg: FlowConfig, probe_points: int, optimal) -> List[tuple]:
    probes = np.linspace(cfg.grid.lower, cfg.grid.upper, probe_points)
    mapped = trace.final_map(probes)
    return [(float(y), float(x), float(s)) for y, x, s in zip(probes, mapped, optimal(probes))]


def histogram_rows(model_samples: np.ndarray, target_samples: np.ndarray, bins: int) -> List[tuple]:
    pooled = np.concatenate([model_samples, target_samples])
    edges = np.linspace(pooled.min(), pooled.max(), bins + 1)
    model_density, _ = np.histogram(model_samples, bins=edges, density=True)
    target_density, _ = np.histogram(target_samples, bins=edges, density=True)
    return [
        (float(a), float(b), float(m), float(t))
        for a, b, m, t in zip(edges[:-1], edges[1:], model_density, target_density)
    ]


def write_weights(trace: FlowTrace, out: Path) -> int:
    """Dumps the student of every distilled layer of the last iterate; returns the count."""
    if not trace.stacks:
        return 0
    count = 0
    for index, layer in enumerate(trace.stacks[-1].layers):
        if isinstance(layer.residual, StudentResidual):
            dump_weights(layer.residual.net, out / "weights" / f"layer_{index}.csv")
            count += 1
    return count


def cmd_flow(config: RunConfig) -> int:
    settings: FlowSettings = config.settings
    out = config.output_dir
    cfg = settings.flow_config(config.seed, config.quad_nodes)
    target, reference = build_target(cfg.target), build_target(cfg.reference)
    optimal = optimal_map(reference, target)
    logger.section(f"flow ({settings.mode}, T={cfg.T}, schedule={cfg.schedule.kind})")
    if isinstance(cfg.schedule, LastIterateSchedule) and settings.measure_b0:
        cfg = with_measured_b0(cfg, target, reference)

    trace = run_flow(settings, cfg)
    write_csv(out / "trace.csv", TRACE_HEADER, [r.row() for r in trace.records])
    if trace.constants:
        write_csv(out / "flow_constants.csv", CONSTANTS_HEADER, trace.constants)
    if trace.profiles:
        write_csv(out / "potential_profile.csv", PROFILE_HEADER, trace.profiles)
    if trace.distill_losses:
        write_csv(out / "distill_log.csv", DISTILL_HEADER, trace.distill_losses)
    write_csv(out / "final_map.csv", FINAL_MAP_HEADER, final_map_rows(trace, cfg, settings.probe_points, optimal))

    summary = {"mode": str(settings.mode), "records": len(trace.records), "failure": trace.failure}
    if trace.final is not None:
        summary.update(final_kl=trace.final.kl, final_sup_map_err=trace.final.sup_map_err)

    model_samples = reference.sample(settings.histogram_samples, make_rng(config.seed, _HISTOGRAM_MODEL))
    model_samples = trace.final_map(model_samples)
    target_samples = target.sample(settings.histogram_samples, make_rng(config.seed, _HISTOGRAM_TARGET))
    write_csv(out / "histogram.csv", HISTOGRAM_HEADER, histogram_rows(model_samples, target_samples, settings.histogram_bins))
    if settings.permutations:
        test = mmd_permutation_test(
            model_samples,
            target_samples,
            cfg.mmd_bandwidth,
            settings.permutations,
            make_rng(config.seed, _PERMUTATION),
        )
        summary["mmd"] = test.model_dump()
        logger.info(f"MMD^2 = {test.statistic:.3e}, permutation p-value {test.p_value:.3f}")

    if trace.complete and trace.steps:
        regret = regret_report(trace)
        summary["regret_sum"] = regret.regret_sum
        if cfg.learner is Learner.ORACLE and settings.mode is not FlowMode.BLOCKS:
            bound = average_iterate_bound(trace, target, reference, cfg.quad)
            summary["average_iterate"] = {"kl_average": bound.kl_average, "bound": bound.bound, "slack": bound.slack}
            logger.info(f"average iterate: KL {bound.kl_average:.6f} <= {bound.bound:.6f}")
    if settings.dump_weights:
        logger.info(f"dumped {write_weights(trace, out)} student weight files")
    dump_json(summary, out / "flow_summary.json")

    if trace.failure:
        logger.error(f"flow failed: {trace.failure}")
        return 1
    logger.success(
        f"flow finished: KL {trace.final.kl:.6f}, sup map error {trace.final.sup_map_err:.4f}; outputs in {out}"
    )
    return 0
