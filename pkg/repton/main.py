"""Command-line entry point.

    repton simulate|contract|gibbs|scan|check --config <path> [--out <dir>]
           [--seed <u64>] [--threads <n>]
"""

import logging
import os
from typing import List, Optional

from absl import app, flags
from dotenv import load_dotenv

from repton.models.experiment import ExperimentKind, parse_config
from repton.services.experiment_service import experiment_service, with_seed
from repton.shared_libraries import constants
from repton.shared_libraries.errors import ConfigurationError

logger = logging.getLogger(__name__)

FLAGS = flags.FLAGS
flags.DEFINE_string("config", None, "Experiment config: a JSON file path or inline JSON.")
flags.DEFINE_string("out", None, "Output directory (falls back to REPTON_OUTPUT_DIR).")
flags.DEFINE_integer("seed", None, "Seed override (unsigned 64-bit).", lower_bound=0)
flags.DEFINE_integer("threads", None, "Worker threads (falls back to REPTON_THREADS).", lower_bound=1)

KINDS = [kind.value for kind in ExperimentKind]


def configure_logging() -> None:
    level = os.getenv(constants.LOG_LEVEL_ENV, constants.DEFAULT_LOG_LEVEL).upper()
    logging.basicConfig(level=level)
    logging.getLogger().setLevel(level)


def resolve_threads(flag_value: Optional[int]) -> int:
    if flag_value is not None:
        return flag_value
    raw = os.getenv(constants.THREADS_ENV)
    try:
        return max(1, int(raw)) if raw else constants.DEFAULT_THREADS
    except ValueError:
        logger.warning(f"Ignoring non-integer {constants.THREADS_ENV}={raw!r}")
        return constants.DEFAULT_THREADS


def main(argv: List[str]) -> int:
    load_dotenv()
    configure_logging()

    if len(argv) != 2 or argv[1] not in KINDS:
        logger.error(f"Usage: repton {{{'|'.join(KINDS)}}} --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]")
        return constants.EXIT_RUNTIME_ERROR
    if FLAGS.seed is not None and FLAGS.seed >= 2**64:
        logger.error("--seed must fit in 64 bits")
        return constants.EXIT_RUNTIME_ERROR
    if not FLAGS.config:
        logger.error("--config is required")
        return constants.EXIT_RUNTIME_ERROR

    try:
        config = parse_config(FLAGS.config)
    except ConfigurationError as e:
        logger.error(str(e))
        return constants.EXIT_RUNTIME_ERROR

    kind = ExperimentKind(argv[1])
    if config.kind != kind:
        logger.warning(f"Config kind {config.kind.value} overridden by subcommand {kind.value}")
        config = config.model_copy(update={"kind": kind})

    outcome = experiment_service.run(
        with_seed(config, FLAGS.seed), FLAGS.out, resolve_threads(FLAGS.threads)
    )
    return outcome.exit_code


def run() -> None:
    app.run(main)


if __name__ == "__main__":
    run()
