from typing import List
import numpy as np
from helpers.helper import write_csv
from logger.logger import logger
from models.base.gaussian import SINKHORN_HEADER, SINKHORN_IDENTITY_HEADER
from models.base.quadrature import QuadratureSpec
from models.config import RunConfig, SinkhornSettings
from modules.flow.targets import standard_normal
from modules.gaussian.sinkhorn import identity_residual_closed_form, sinkhorn_residual, sinkhorn_residual_profile
from modules.potential.potential import PotentialStack


def limit_rows(settings: SinkhornSettings, quad) -> List[tuple]:
    """(epsilon, max residual) for psi = slope * y^2 / 2 with f = g = N(0, 1)"""
    normal = standard_normal()
    psi = PotentialStack.identity(settings.slope)
    probes = np.linspace(-settings.probe_radius, settings.probe_radius, settings.probe_count)
    return [
        (eps, sinkhorn_residual(psi, eps, normal, normal, quad, probes, settings.tolerance))
        for eps in settings.epsilons
    ]


def identity_rows(settings: SinkhornSettings, quad) -> List[tuple]:
    """(epsilon, max residual, max gap to the closed form) for psi = y^2 / 2"""
    normal = standard_normal()
    psi = PotentialStack.identity(1.0)
    probes = np.linspace(-settings.probe_radius, settings.probe_radius, settings.probe_count)
    rows = []
    for eps in settings.epsilons:
        profile = sinkhorn_residual_profile(psi, eps, normal, normal, quad, probes, settings.tolerance)
        gap = np.max(np.abs(profile - identity_residual_closed_form(eps, probes)))
        rows.append((eps, float(np.max(np.abs(profile))), float(gap)))
    return rows


def cmd_sinkhorn_limit(config: RunConfig) -> int:
    settings: SinkhornSettings = config.settings
    out = config.output_dir
    quad = settings.quad
    if config.quad_nodes is not None:
        quad = QuadratureSpec(nodes=config.quad_nodes, panels=quad.panels, domain=quad.domain)
    logger.section("sinkhorn-limit")

    rows = limit_rows(settings, quad)
    write_csv(out / "sinkhorn_limit.csv", SINKHORN_HEADER, rows)
    residuals = [r[1] for r in rows]
    for (eps, value), (_, previous) in zip(rows[1:], rows[:-1]):
        logger.output(f"eps={eps}: residual {value:.3e} (halving ratio {previous / value:.3f})")
    if any(b >= a for a, b in zip(residuals, residuals[1:])):
        logger.warning("residual is not decreasing in epsilon")

    identity = identity_rows(settings, quad)
    write_csv(out / "sinkhorn_identity.csv", SINKHORN_IDENTITY_HEADER, identity)
    logger.info(f"identity instance: max gap to the closed form {max(r[2] for r in identity):.3e}")

    logger.success(f"sinkhorn-limit outputs written to {out}")
    return 0
