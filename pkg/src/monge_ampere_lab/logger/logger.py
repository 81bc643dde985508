import logging
import os
import sys
import time
from contextlib import contextmanager
from typing import Iterator, Optional
from colorama import Fore, Style, init

init()

# numeric progress sits below INFO; stage banners and results above it
CUSTOM_LEVELS = {"OUTPUT": 15, "SUCCESS": 25, "SECTION": 26}

for _name, _value in CUSTOM_LEVELS.items():
    logging.addLevelName(_value, _name)


class ColorFormatter(logging.Formatter):
    """Colours the level name only; NO_COLOR in the environment turns colour off"""

    COLORS = {
        "DEBUG": Fore.CYAN,
        "OUTPUT": Fore.MAGENTA,
        "INFO": Fore.BLUE,
        "SUCCESS": Fore.GREEN + Style.BRIGHT,
        "SECTION": Fore.CYAN + Style.BRIGHT,
        "WARNING": Fore.YELLOW,
        "ERROR": Fore.RED + Style.BRIGHT,
    }

    def __init__(self, *args, use_color: bool = True, **kwargs):
        super().__init__(*args, **kwargs)
        self.use_color = use_color

    def format(self, record):
        formatted = super().format(record)
        if not self.use_color:
            return formatted
        color = self.COLORS.get(record.levelname, "")
        return formatted.replace(record.levelname, f"{color}{record.levelname:^7}{Style.RESET_ALL}", 1)


class ColorLogger:
    def __init__(self, name: Optional[str] = None):
        self.logger = logging.getLogger(name or "monge_ampere_lab")
        self.logger.propagate = False
        self.set_level(os.getenv("LOG_LEVEL", "INFO"))

        if not self.logger.handlers:
            # stdout is left to the result files' consumers
            console = logging.StreamHandler(sys.stderr)
            console.setFormatter(
                ColorFormatter(
                    "%(asctime)s %(levelname)s %(message)s",
                    datefmt="%H:%M:%S",
                    use_color="NO_COLOR" not in os.environ,
                )
            )
            self.logger.addHandler(console)

    def set_level(self, level: str):
        name = level.upper()
        self.logger.setLevel(CUSTOM_LEVELS.get(name) or getattr(logging, name, logging.INFO))

    def is_debug(self) -> bool:
        return self.logger.isEnabledFor(logging.DEBUG)

    def debug(self, msg: str):
        self.logger.debug(msg)

    def output(self, msg: str):
        self.logger.log(CUSTOM_LEVELS["OUTPUT"], msg)

    def info(self, msg: str):
        self.logger.info(msg)

    def section(self, name: str):
        self.logger.log(CUSTOM_LEVELS["SECTION"], f"== {name} ==")

    def success(self, msg: str):
        self.logger.log(CUSTOM_LEVELS["SUCCESS"], msg)

    def warning(self, msg: str):
        self.logger.warning(msg)

    def error(self, msg: str):
        self.logger.error(msg)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Logs the wall time of the enclosed block at OUTPUT level"""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.output(f"{name}: {time.perf_counter() - start:.2f}s")


logger = ColorLogger()
