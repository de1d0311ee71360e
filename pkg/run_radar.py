import argparse
import sys

from config import Config, ConfigurationError, RadarError
from experiment_engine import EXPERIMENT_KINDS, ExperimentEngine
from logger import set_console_level, setup_logger
from mitigate import ALGORITHMS

logger = setup_logger("run_radar")

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def build_parser():
    parser = argparse.ArgumentParser(description="OFDM radar ISI/ICI mitigation simulator")
    target = parser.add_mutually_exclusive_group(required=True)
    target.add_argument("--scenario", help="scenario JSON file to run")
    target.add_argument("--experiment", choices=EXPERIMENT_KINDS, help="experiment to run")
    parser.add_argument("--out", default=Config.OUTPUT_DIR, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="random seed (u64)")
    parser.add_argument("--algo", choices=ALGORITHMS, default=None, help="override the scenario algorithm")
    parser.add_argument("--trials", type=int, default=10, help="Monte Carlo trials per point")
    parser.add_argument("--config", default='desk', help="system preset or config JSON for experiments")
    parser.add_argument("--log-level", default=None, choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_console_level(args.log_level)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        logger.error("seed: must be an unsigned 64-bit integer")
        return EXIT_CONFIG_ERROR

    engine = ExperimentEngine(out_dir=args.out, seed=args.seed)
    try:
        Config.validate()
        if args.scenario:
            engine.run_scenario(args.scenario, algorithm=args.algo)
        elif args.experiment == 'scenario':
            logger.error("scenario: use --scenario <file> to run a scenario")
            return EXIT_CONFIG_ERROR
        else:
            engine.run_experiment(args.experiment, config=args.config, trials=args.trials)
    except ConfigurationError as e:
        logger.error(f"Configuration error in '{e.field}': {e}")
        return EXIT_CONFIG_ERROR
    except RadarError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_RUN_FAILURE
    except ValueError as e:
        logger.error(f"Invalid settings: {e}")
        return EXIT_CONFIG_ERROR
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_RUN_FAILURE
    finally:
        engine.finalize_report()

    logger.info(f"Results written to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
