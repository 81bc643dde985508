from models.config import RunConfig
from logger.logger import logger


def run_handler(config: RunConfig) -> int:
    """Runs the subcommand the configuration selects and returns its exit code."""
    logger.debug(f"Starting run_handler for {config.subcommand}")
    logger.info(f"Running {config.subcommand} with seed {config.seed}")
    with logger.stage(config.subcommand):
        code = config.settings.execute(config)
    if code == 0:
        logger.success(f"{config.subcommand} finished")
    return code
