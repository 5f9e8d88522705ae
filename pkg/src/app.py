"""
CapMass 1.0 - Application Entry Point
Command-line application: parses arguments, resolves the scenario settings
and dispatches one subcommand.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.core.errors import (
    CapMassError,
    ConfigError,
    DomainError,
    ExhaustionError,
    RegionError,
    UnsupportedModelError,
)
from src.services.runner import RunOutcome, record_run, run_command
from src.services.settings import ScenarioSettings
from src.services.verification import run_verify
from src.utils.constants import (
    EXIT_CONFIG_ERROR,
    EXIT_SOLVER_FAILURE,
    ReportConfig,
    TOOL_NAME,
    TOOL_VERSION,
)

logger = logging.getLogger(__name__)

# Failures caused by the scenario rather than by a numerical method
CONFIG_FAILURES = (ConfigError, RegionError, ExhaustionError, UnsupportedModelError, DomainError)

SUBCOMMANDS = {
    "capacity": "capacity of one region, one line per backend",
    "deficit": "every deficit functional of one region",
    "convergence": "deficit records over an exhaustion and their limits",
    "sweep": "convergence studies over sweep.key x sweep.values",
    "verify": "built-in acceptance suite",
}


class CapMassApp:
    """
    Main application class.
    Owns argument parsing, logging setup and the mapping of failures to exit codes.
    """

    def __init__(self, argv: Optional[List[str]] = None):
        self._argv = argv
        self._args: Optional[argparse.Namespace] = None
        self._settings: Optional[ScenarioSettings] = None

    @staticmethod
    def _common_options() -> argparse.ArgumentParser:
        """Flags accepted both before and after the subcommand."""
        common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
        common.add_argument("--config", type=Path, help="flat key = value scenario file")
        common.add_argument("--out", help="run directory (output.dir)")
        common.add_argument("--seed", type=int, help="rng.seed")
        common.add_argument("--threads", type=int, help="worker threads (solver.threads)")
        common.add_argument("--fast", action="store_true", help="skip grid criteria in verify")
        common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

        scenario = common.add_argument_group("scenario overrides")
        scenario.add_argument("--metric", help="metric.kind")
        scenario.add_argument("--mass", type=float, help="metric.mass")
        scenario.add_argument("--dimension", type=int, help="metric.dimension")
        scenario.add_argument("--ball", type=float, metavar="R", help="centered ball of radius R")
        scenario.add_argument("--ellipsoid", metavar="A,B,C", help="centered ellipsoid with these semi-axes")
        scenario.add_argument("--backend", help="capacity.backends")
        scenario.add_argument("--grid-n", type=int, dest="grid_n", help="solver.grid_n")
        return common

    def _build_parser(self) -> argparse.ArgumentParser:
        common = self._common_options()
        parser = argparse.ArgumentParser(
            prog=TOOL_NAME,
            description="Capacity, isoperimetric and isocapacitary mass deficits on asymptotically flat manifolds.",
            parents=[common],
        )
        parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
        subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
        for name, help_text in SUBCOMMANDS.items():
            subparsers.add_parser(name, help=help_text, parents=[common])
        return parser

    @staticmethod
    def _init_logging(verbose: bool) -> None:
        logging.basicConfig(
            level=logging.DEBUG if verbose else logging.WARNING,
            format=ReportConfig.LOG_FORMAT,
            stream=sys.stderr,
            force=True,
        )

    @staticmethod
    def _overrides(args: argparse.Namespace) -> dict:
        """Flag values as settings keys; flags win over the config file."""
        mapping = {
            "out": "output.dir",
            "seed": "rng.seed",
            "threads": "solver.threads",
            "metric": "metric.kind",
            "mass": "metric.mass",
            "dimension": "metric.dimension",
            "backend": "capacity.backends",
            "grid_n": "solver.grid_n",
        }
        overrides = {key: getattr(args, flag) for flag, key in mapping.items() if hasattr(args, flag)}
        if hasattr(args, "ball") and hasattr(args, "ellipsoid"):
            raise ConfigError("--ball and --ellipsoid are mutually exclusive")
        if hasattr(args, "ball"):
            overrides.update({"region.shape": "ball", "region.params": f"radius={args.ball}"})
        if hasattr(args, "ellipsoid"):
            overrides.update({"region.shape": "ellipsoid", "region.params": f"axes={args.ellipsoid}"})
        return overrides

    def _init_settings(self, args: argparse.Namespace) -> ScenarioSettings:
        return ScenarioSettings(config_path=getattr(args, "config", None), overrides=self._overrides(args))

    def _dispatch(self, command: str) -> RunOutcome:
        s = self._settings
        out_dir = Path(s.get("output.dir"))
        threads = s.get("solver.threads")
        if command == "verify":
            outcome = run_verify(s, out_dir, threads, fast=getattr(self._args, "fast", False), echo=print)
            record_run(s, outcome, out_dir, threads)
            return outcome
        outcome = run_command(command, s, out_dir, threads)
        for line in outcome.lines:
            print(line)
        return outcome

    def run(self) -> int:
        """Run one command and return its exit code."""
        self._args = self._build_parser().parse_args(self._argv)
        self._init_logging(getattr(self._args, "verbose", False))

        try:
            self._settings = self._init_settings(self._args)
            outcome = self._dispatch(self._args.command)
        except CONFIG_FAILURES as e:
            print(f"{TOOL_NAME}: configuration error: {e}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        except CapMassError as e:
            print(f"{TOOL_NAME}: solver failure: {e}", file=sys.stderr)
            return EXIT_SOLVER_FAILURE

        logger.info("%s finished with exit code %d", outcome.command, outcome.exit_code)
        return outcome.exit_code


def main():
    """Application entry point."""
    app = CapMassApp()
    sys.exit(app.run())


if __name__ == "__main__":
    main()
