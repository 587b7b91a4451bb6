"""
Utility functions for the workbench: logging setup, environment settings,
file-name sanitising and the worker pool.
"""
import os
import re
import logging
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

DEFAULT_TRAJECTORY_BATCH = 256


def configure_logging(level=None):
    """
    Configure root logging once for the command-line entry point.

    Args:
        level (str): Level name; falls back to QAOA_LOG_LEVEL, then INFO
    """
    level_name = (level or os.getenv("QAOA_LOG_LEVEL") or "INFO").upper()
    numeric = getattr(logging, level_name, None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(format=LOG_FORMAT, level=numeric)
    logging.getLogger().setLevel(numeric)


def default_jobs():
    """
    Number of worker threads when --jobs is not given.

    Returns:
        int: QAOA_JOBS if set to a positive integer, else the core count
    """
    raw = os.getenv("QAOA_JOBS")
    if raw:
        try:
            jobs = int(raw)
            if jobs >= 1:
                return jobs
        except ValueError:
            pass
        logger.warning(f"Ignoring invalid QAOA_JOBS value: {raw!r}")
    return os.cpu_count() or 1


def trajectory_batch_size():
    """Largest number of noisy trajectories simulated in one array."""
    raw = os.getenv("QAOA_TRAJECTORY_BATCH")
    if raw:
        try:
            size = int(raw)
            if size >= 1:
                return size
        except ValueError:
            pass
        logger.warning(f"Ignoring invalid QAOA_TRAJECTORY_BATCH value: {raw!r}")
    return DEFAULT_TRAJECTORY_BATCH


def sanitize_filename(filename):
    """
    Sanitize a name so it can be embedded in an artifact file name.

    Args:
        filename (str): Original name, e.g. a profile tag

    Returns:
        str: Lower-case name made of [a-z0-9_-]
    """
    sanitized = re.sub(r'[^A-Za-z0-9_-]+', '_', filename.strip()).strip('_').lower()

    max_length = 50
    if len(sanitized) > max_length:
        sanitized = sanitized[:max_length]

    if not sanitized:
        sanitized = "unnamed"

    return sanitized


def run_parallel(func, tasks, jobs=1):
    """
    Apply func to every task, optionally on a thread pool.

    Results come back in task order, so the outcome does not depend on the
    number of workers as long as func itself is deterministic per task.

    Args:
        func (callable): Function of one task
        tasks (iterable): Task descriptions
        jobs (int): Worker count; 1 runs serially

    Returns:
        list: func(task) for every task, in order
    """
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    with ThreadPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(func, tasks))
