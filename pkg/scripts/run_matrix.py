"""
Experiment Matrix CLI
Runs controllers x traffic states x values of time x seeds and writes the result tables
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from core.world import SimulationIntegrityError
from services.experiment import ExperimentConfig, run_matrix, summary_by_cell
from utils.config import ConfigValidator, EnvSettings, SimulationParameters, load_config_file, load_env_settings

logger = logging.getLogger(__name__)

# Config-file keys that describe the matrix rather than simulation parameters
HARNESS_KEYS = (
    "controllers", "states", "vot", "seeds", "base_seed", "out", "workers", "welch",
    "network", "planner_budget_multiple",
)


class ConfigError(ValueError):
    """Invalid experiment configuration"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_matrix",
        description="Compare subject controllers on the two-lane highway",
    )
    parser.add_argument("--controllers", nargs="+", help="Controllers to run (default: all seven)")
    parser.add_argument("--states", nargs="+", help="Traffic states: free, onset, congested (default: all)")
    parser.add_argument("--vot", nargs="+", type=float, help="Values of time in $/h (default: 0 20)")
    parser.add_argument("--seeds", type=int, help="Seeds per cell (default: 25)")
    parser.add_argument("--base-seed", type=int, help="First seed (default: SIM_BASE_SEED or 2019)")
    parser.add_argument("--out", help="Output directory (default: SIM_OUTPUT_DIR or results)")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a simulation parameter; repeatable")
    parser.add_argument("--grid-speed-step", type=float, help="Planner end-speed grid step in m/s")
    parser.add_argument("--sample-dt", type=float, help="Planner constraint sampling step in s")
    parser.add_argument("--config", help="KEY = VALUE configuration file")
    parser.add_argument("--network", help="Road network layout file")
    parser.add_argument("--workers", type=int, help="Parallel worker processes")
    parser.add_argument("--welch", action="store_true", default=None, help="Use the unequal-variance t-test")
    parser.add_argument("--planner-budget-multiple", type=float,
                        help="Abort when a replan exceeds this many update periods")
    parser.add_argument("--log-level", help="Logging level (default: SIM_LOG_LEVEL or INFO)")
    parser.add_argument("--no-run-files", action="store_true", help="Only write the summary tables")
    parser.add_argument("--no-progress", action="store_true", help="Hide the progress bar")
    return parser


def _split_list(values: Sequence[str]) -> List[str]:
    return [part for value in values for part in value.replace(",", " ").split()]


def _list_setting(flag_values: Optional[Sequence[str]], harness: Dict[str, str], key: str) -> Optional[List[str]]:
    if flag_values:
        return _split_list(flag_values)
    if key in harness:
        return _split_list([harness[key]])
    return None


def _parse_params(pairs: Sequence[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--param expects KEY=VALUE, got '{pair}'")
        key, value = (part.strip() for part in pair.split("=", 1))
        overrides[key.lower().replace("-", "_")] = value
    return overrides


def _check(result: tuple) -> None:
    is_valid, error_msg = result
    if not is_valid:
        raise ConfigError(error_msg)


def build_config(args: argparse.Namespace, env: EnvSettings) -> ExperimentConfig:
    """
    Merge defaults, environment, config file and flags into an ExperimentConfig

    Args:
        args: Parsed command line
        env: Environment settings

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: on any invalid value
    """
    file_values = load_config_file(args.config) if args.config else {}
    harness = {key: file_values.pop(key) for key in HARNESS_KEYS if key in file_values}

    overrides: Dict[str, object] = dict(file_values)
    overrides.update(_parse_params(args.param))
    if args.grid_speed_step is not None:
        overrides["speed_step"] = args.grid_speed_step
    if args.sample_dt is not None:
        overrides["sample_dt"] = args.sample_dt
    _check(ConfigValidator.validate_parameter_overrides(overrides))
    parameters = SimulationParameters().with_overrides(overrides)

    def pick(flag, key: str, default=None):
        if flag is not None:
            return flag
        return harness.get(key, default)

    controllers = _list_setting(args.controllers, harness, "controllers")
    states = _list_setting(args.states, harness, "states")
    vot_values = _list_setting([str(v) for v in args.vot] if args.vot else None, harness, "vot")
    vot = [float(v) for v in vot_values] if vot_values is not None else None

    values: Dict[str, object] = {
        "seeds": pick(args.seeds, "seeds", 25),
        "base_seed": pick(args.base_seed, "base_seed", env.base_seed),
        "out_dir": pick(args.out, "out", env.output_dir),
        "workers": pick(args.workers, "workers", env.workers),
        "welch": pick(args.welch, "welch", False),
        "network_file": pick(args.network, "network"),
        "budget_multiple": pick(args.planner_budget_multiple, "planner_budget_multiple"),
        "parameters": parameters,
        "write_runs": not args.no_run_files,
    }
    if controllers is not None:
        _check(ConfigValidator.validate_controllers(controllers))
        values["controllers"] = controllers
    if states is not None:
        _check(ConfigValidator.validate_states(states))
        values["states"] = states
    if vot is not None:
        _check(ConfigValidator.validate_vot(vot))
        values["vot"] = vot

    _check(ConfigValidator.validate_seeds(int(values["seeds"])))
    try:
        config = ExperimentConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"Invalid value for {first['loc'][0]}: {first['msg']}")
    if config.network_file is not None:
        parameters.network(config.network_file)
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    env = load_env_settings()
    logging.basicConfig(
        level=(args.log_level or env.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = build_config(args, env)
    except (ConfigError, ValueError, OSError) as e:
        parser.print_usage(sys.stderr)
        logger.error(f"Invalid configuration: {str(e)}")
        return 1

    try:
        result = run_matrix(config, progress=not args.no_progress)
    except SimulationIntegrityError as e:
        logger.error(f"Simulation integrity failure: {str(e)}")
        return 2

    for metric, table in summary_by_cell(result.results).items():
        logger.info(f"{metric} mean per cell:\n{table.to_string(index=False)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
