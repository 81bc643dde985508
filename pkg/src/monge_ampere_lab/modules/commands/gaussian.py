from typing import List
import numpy as np
from helpers.helper import dump_json, write_csv
from logger.logger import logger
from models.base.gaussian import CONTINUOUS_HEADER, DISCRETE_HEADER, CertificateRejection
from models.config import GaussianSettings, RunConfig
from modules.gaussian.gaussian import (
    contraction_certificate,
    contraction_sweep,
    fokker_planck_sigma_sq,
    riccati_path,
    slope_iterates,
    variance_ratio,
)


def continuous_rows(settings: GaussianSettings) -> List[tuple]:
    """(t, sigma_riccati, sigma_fp, ratio); at lambda = 1 both flows sit at the fixed point."""
    times = np.round(np.arange(0.0, settings.t_max + 0.5 * settings.t_step, settings.t_step), 12)
    lambda_ = settings.lambda_
    sigma_riccati = np.atleast_1d(riccati_path(times, lambda_))
    sigma_fp = np.sqrt(np.atleast_1d(fokker_planck_sigma_sq(times, lambda_)))
    if lambda_ == 1.0:
        ratio = np.ones_like(times)
    else:
        ratio = np.atleast_1d(variance_ratio(times, lambda_))
    return [tuple(float(v) for v in row) for row in zip(times, sigma_riccati, sigma_fp, ratio)]


def discrete_rows(settings: GaussianSettings):
    """(k, c_k, bound) rows and the certificate (or its rejection)."""
    certificate = contraction_certificate(settings.lambda_, settings.eta, settings.c0, settings.upsilon)
    if isinstance(certificate, CertificateRejection):
        logger.warning(f"Contraction certificate rejected ({certificate.hypothesis}): {certificate.detail}")
        rows = [(k, c, None) for k, c in slope_iterates(settings.c0, settings.eta, settings.lambda_, settings.steps)]
        return rows, certificate
    return contraction_sweep(certificate, settings.steps), certificate


def cmd_gaussian(config: RunConfig) -> int:
    settings: GaussianSettings = config.settings
    out = config.output_dir
    logger.section("gaussian")

    rows = continuous_rows(settings)
    write_csv(out / "gaussian_continuous.csv", CONTINUOUS_HEADER, rows)
    logger.info(f"Riccati vs Fokker-Planck: {len(rows)} time points, final ratio {rows[-1][3]:.6g}")

    rows, certificate = discrete_rows(settings)
    write_csv(out / "gaussian_discrete.csv", DISCRETE_HEADER, rows)
    summary = {"certified": not isinstance(certificate, CertificateRejection)}
    summary.update(certificate.model_dump(by_alias=True))
    dump_json(summary, out / "gaussian_certificate.json")

    logger.success(f"gaussian outputs written to {out}")
    return 0
