from concurrent.futures import ThreadPoolExecutor
from typing import List
import numpy as np
from helpers.helper import make_rng, write_csv
from logger.logger import logger
from models.base.gaussian import CONVEXITY_HEADER, THREE_POINT_HEADER, GaussianTriple, ThreePointTerms
from models.base.quadrature import QuadratureSpec
from models.config import RunConfig, ThreePointSettings
from modules.divergence.density import gaussian_density
from modules.divergence.divergence import three_point_quadrature
from modules.gaussian.gaussian import gaussian_bg, gaussian_kl, gaussian_three_point


def random_triples(rng: np.random.Generator, count: int, sigma_range) -> List[GaussianTriple]:
    draws = rng.uniform(sigma_range[0], sigma_range[1], size=(count, 4))
    return [GaussianTriple(sigma_g=a, sigma_1=b, sigma_2=c, sigma_pi=d) for a, b, c, d in draws]


def quadrature_terms(triple: GaussianTriple, quad) -> ThreePointTerms:
    return three_point_quadrature(
        gaussian_density(0.0, triple.sigma_pi),
        gaussian_density(0.0, triple.sigma_1),
        gaussian_density(0.0, triple.sigma_2),
        gaussian_density(0.0, triple.sigma_g),
        quad,
    )


def _row(trial: int, terms: ThreePointTerms) -> tuple:
    return (trial, terms.lhs, terms.bg_pi_rho1, terms.bg_pi_rho2, terms.bg_gpi, terms.residual)


def convexity_row(trial: int, triple: GaussianTriple) -> tuple:
    """KL(pi|rho_1) against (lambda_g / beta) B_G(pi|rho_1) in closed form"""
    kl = gaussian_kl(0.0, triple.sigma_pi, 0.0, triple.sigma_1)
    lambda_g = 1.0 / triple.sigma_g**2
    beta = triple.sigma_1 / triple.sigma_g
    bound = lambda_g / beta * gaussian_bg(triple.sigma_g, triple.sigma_1, triple.sigma_pi)
    return (trial, kl, bound, kl - bound)


def cmd_three_point(config: RunConfig) -> int:
    settings: ThreePointSettings = config.settings
    out = config.output_dir
    logger.section("three-point")

    triples = random_triples(make_rng(config.seed, 0), settings.trials, settings.sigma_range)
    closed = [_row(i, gaussian_three_point(t)) for i, t in enumerate(triples)]
    write_csv(out / "three_point.csv", THREE_POINT_HEADER, closed)
    logger.info(f"closed form: max residual {max(r[-1] for r in closed):.3e} over {len(closed)} triples")

    convexity = [convexity_row(i, t) for i, t in enumerate(triples)]
    write_csv(out / "relative_convexity.csv", CONVEXITY_HEADER, convexity)
    logger.info(f"relative convexity: min gap {min(r[-1] for r in convexity):.3e}")

    quad = settings.quad
    if config.quad_nodes is not None:
        quad = QuadratureSpec(nodes=config.quad_nodes, panels=quad.panels, domain=quad.domain)
    if settings.quad_trials:
        quad_triples = random_triples(make_rng(config.seed, 1), settings.quad_trials, settings.quad_sigma_range)
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            terms = list(pool.map(lambda t: quadrature_terms(t, quad), quad_triples))
        numeric = [_row(i, t) for i, t in enumerate(terms)]
        write_csv(out / "three_point_quadrature.csv", THREE_POINT_HEADER, numeric)
        logger.info(f"quadrature: max residual {max(r[-1] for r in numeric):.3e} over {len(numeric)} triples")

    logger.success(f"three-point outputs written to {out}")
    return 0
