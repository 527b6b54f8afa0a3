"""
imig - Utility Decorators
==========================
Decorators shared by the services and the command layer.

Example:
    @log_stage
    def build_foreground_mesh(...):
        ...

    @bench_bp.cli.command('run')
    @handle_case_errors
    def run_case(...):
        ...
"""

import logging
import sys
import time
from functools import wraps

import click

from imig.exceptions import ImigError


def log_stage(f):
    """Log start, finish and wall time of an expensive pipeline stage at DEBUG."""
    logger = logging.getLogger(f.__module__)

    @wraps(f)
    def decorated_function(*args, **kwargs):
        logger.debug(f"{f.__name__}: started")
        start = time.perf_counter()
        result = f(*args, **kwargs)
        logger.debug(f"{f.__name__}: finished in {time.perf_counter() - start:.3f}s")
        return result
    return decorated_function


def handle_case_errors(f):
    """
    Turn pipeline errors into a logged message and exit status 1.

    Unexpected exceptions are not caught; they surface with their traceback.
    """
    logger = logging.getLogger(f.__module__)

    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ImigError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            click.echo(f"Error: {exc}", err=True)
            sys.exit(1)
    return decorated_function
