import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
from pydantic import ValidationError
from helpers.errors import ArgumentError, LabError
from logger.logger import logger
from models.config import MAX_SEED, RunConfig, settings_key
from models.config_processor import nest_dotted
from modules.processor import run_handler

SCHEDULES = ("constant", "inverse-sqrt-t", "logarithmic", "last-iterate", "adaptive")
FLOW_MODES = ("oracle", "oracle-distill", "logistic", "score", "blocks")

# field that --T sets for each subcommand
_HORIZON_FIELD = {"gaussian": "steps", "three-point": "trials", "flow": "T", "vi": "T"}


def seed_value(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64 - 1], got {text}")
    return value


def parse_starts(text: str) -> List[Tuple[float, float]]:
    """'m,s;m,s' -> [(m, s), (m, s)]"""
    try:
        return [tuple(float(v) for v in pair.split(",")) for pair in text.split(";") if pair.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"starts must look like 'm,s;m,s', got {text!r}") from exc


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="YAML or JSON configuration file")
    parser.add_argument("--seed", type=seed_value, help="Master seed (u64)")
    parser.add_argument("--out", type=Path, help="Output directory (default outputs/<subcommand>)")
    parser.add_argument("--T", type=int, dest="horizon", help="Number of steps (trials for three-point)")
    parser.add_argument("--quad-nodes", type=int, help="Quadrature node count")
    parser.add_argument("--jobs", type=int, help="Worker threads for independent trials")
    parser.add_argument(
        "--log-level",
        choices=("DEBUG", "OUTPUT", "INFO", "WARNING", "ERROR"),
        help="Overrides the LOG_LEVEL environment variable",
    )


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="One-dimensional parabolic Monge-Ampere flow lab.")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    gaussian = subparsers.add_parser("gaussian", help="Riccati and discrete Gaussian slope dynamics")
    _common(gaussian)
    gaussian.add_argument("--lambda", type=float, dest="lambda_", help="Reference scale lambda in (0, 1]")
    gaussian.add_argument("--eta", type=float, help="Constant step size of the discrete sweep")
    gaussian.add_argument("--c0", type=float, help="Initial slope")
    gaussian.add_argument("--upsilon", type=float, help="Contraction factor")
    gaussian.add_argument("--t-max", type=float, help="Last time of the continuous comparison")

    three_point = subparsers.add_parser("three-point", help="Three-point identity and relative convexity")
    _common(three_point)
    three_point.add_argument("--quad-trials", type=int, help="Triples checked by quadrature")

    sinkhorn = subparsers.add_parser("sinkhorn-limit", help="Entropic update residual as epsilon shrinks")
    _common(sinkhorn)
    sinkhorn.add_argument("--epsilons", type=float, nargs="+", help="Entropic regularisation levels")
    sinkhorn.add_argument("--slope", type=float, help="Slope of the quadratic potential")

    flow = subparsers.add_parser("flow", help="Oracle and learned flows on the mixture target")
    _common(flow)
    flow.add_argument("--mode", choices=FLOW_MODES, help="Residual and distillation mode")
    flow.add_argument("--schedule", choices=SCHEDULES, help="Step-size schedule")
    flow.add_argument("--adaptive-mode", choices=("min", "paper-max"), help="Rule of the adaptive schedule")
    flow.add_argument("--eta", type=float, help="Step size of the constant schedule")
    flow.add_argument("--target-equals-reference", action="store_true", default=None)
    flow.add_argument("--mmd-samples", type=int, help="Samples per side of the per-step MMD")
    flow.add_argument("--profile-points", type=int, help="Points of the per-step potential profile")
    flow.add_argument("--block-size", type=int, help="Steps between reference refreshes (blocks mode)")
    flow.add_argument("--sample-count", type=int, help="Samples drawn by the learners")
    flow.add_argument("--dump-weights", action="store_true", default=None)

    vi = subparsers.add_parser("vi", help="Univariate Gaussian variational inference")
    _common(vi)
    vi.add_argument("--target", choices=("logistic", "gaussian"), help="Target family")
    vi.add_argument("--location", type=float, help="Target location")
    vi.add_argument("--m0", type=float, help="Initial mean")
    vi.add_argument("--s0", type=float, help="Initial scale")
    vi.add_argument("--eta", type=float, help="Fixed step size (adaptive when unset)")
    vi.add_argument("--lambda", type=float, dest="lambda_", help="Reference scale")
    vi.add_argument("--mc", type=int, help="Monte Carlo expectations with this many samples")
    vi.add_argument("--starts", type=parse_starts, help="Extra starting points 'm,s;m,s'")

    verify = subparsers.add_parser("verify", help="Invariant suite")
    _common(verify)
    verify.add_argument("--filter", help="Only checks whose name contains this text")
    verify.add_argument("--full", action="store_true", default=None, help="Include slow checks")

    return parser.parse_args(argv)


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flags that were given, as a nested override dictionary."""
    section = settings_key(args.subcommand)
    flat: Dict[str, Any] = {
        "subcommand": args.subcommand,
        "seed": args.seed,
        "output_dir": str(args.out) if args.out else None,
        "quad_nodes": args.quad_nodes,
        "jobs": args.jobs,
    }
    if args.horizon is not None:
        field = _HORIZON_FIELD.get(args.subcommand)
        if field is None:
            logger.warning(f"--T has no effect on {args.subcommand}")
        else:
            flat[f"{section}.{field}"] = args.horizon

    skip = {"subcommand", "config", "seed", "out", "horizon", "quad_nodes", "jobs", "log_level"}
    skip |= {"schedule", "adaptive_mode", "mc"}
    if args.subcommand == "flow":
        skip.add("eta")
    renames = {"lambda_": "lambda"}
    for name, value in vars(args).items():
        if name in skip or value is None:
            continue
        flat[f"{section}.{renames.get(name, name)}"] = value

    if args.subcommand == "vi" and args.mc is not None:
        flat["vi.expectation.mode"] = "mc"
        flat["vi.expectation.sample_count"] = args.mc
    return nest_dotted(flat)


def with_schedule(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Applies --schedule/--adaptive-mode/--eta to the flow section."""
    if config.subcommand != "flow":
        return config
    current = json.loads(config.flow.schedule.model_dump_json(by_alias=True))
    kind = args.schedule or current["kind"]
    schedule = current if kind == current["kind"] else {"kind": kind}
    if kind in ("inverse-sqrt-t", "last-iterate"):
        schedule["T"] = max(config.flow.T, 2) if kind == "last-iterate" else config.flow.T
    if args.adaptive_mode is not None:
        if kind != "adaptive":
            raise ArgumentError("--adaptive-mode needs the adaptive schedule")
        schedule["mode"] = args.adaptive_mode
    if args.eta is not None:
        if kind != "constant":
            raise ArgumentError("--eta needs the constant schedule")
        schedule["eta"] = args.eta
    data = json.loads(config.model_dump_json(by_alias=True))
    data["flow"]["schedule"] = schedule
    return RunConfig.model_validate(data)


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config, collect_overrides(args))
    return with_schedule(config, args)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_arguments(argv)
    if args.log_level:
        logger.set_level(args.log_level)
    logger.info("Starting the application")
    try:
        config = load_config(args)
    except (ValidationError, ArgumentError, FileNotFoundError) as exc:
        logger.error(f"Invalid configuration: {exc}")
        return 2
    logger.info("Config: loaded")

    out = config.echo()
    logger.info(f"Config: echoed to {out}")
    if logger.is_debug():
        logger.debug(config.dump_yaml())

    try:
        code = run_handler(config)
    except LabError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return exc.exit_code
    logger.info("Application finished")
    return code


if __name__ == "__main__":
    sys.exit(main())
