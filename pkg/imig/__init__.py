"""
imig - Application Factory
===========================
Interpolation-based immersogeometric analysis toolkit: level set geometry,
truncated hierarchical B-splines, Heaviside enrichment and Nitsche-coupled
thermoelastic solves on boundary-fitted foreground meshes.

The numerical services are plain functions usable without an application.
The factory wraps them in a Flask application whose CLI runs the benchmark
cases with a selected configuration class.
"""

import logging
import os

from flask import Flask

__version__ = '1.0.0'


def create_app(config_name=None):
    """
    Application factory function.

    Args:
        config_name: Configuration to use ('development', 'production', 'testing').
                     Defaults to the IMIG_ENV environment variable or 'development'.

    Returns:
        Flask application instance with the bench commands registered.
    """
    app = Flask(__name__)

    # ---------- Load Configuration ----------
    if config_name is None:
        config_name = os.environ.get('IMIG_ENV', 'development')

    from imig.config import config_by_name
    app.config.from_object(config_by_name.get(config_name, config_by_name['default']))

    # ---------- Setup Logging ----------
    _configure_logging(app)

    # ---------- Register Blueprints (Command Modules) ----------
    _register_blueprints(app)

    app.logger.info(f"imig {__version__} started in {config_name} mode")
    return app


def _configure_logging(app):
    """Configure logging: DEBUG for development, INFO otherwise, IMIG_LOG_LEVEL wins."""
    log_level = logging.DEBUG if app.config.get('DEBUG') else logging.INFO
    override = app.config.get('LOG_LEVEL')
    if override:
        log_level = logging.getLevelName(override.upper())
        if not isinstance(log_level, int):
            log_level = logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    logging.getLogger('imig').setLevel(log_level)
    app.logger.setLevel(log_level)


def _register_blueprints(app):
    """Register the command blueprints."""
    from imig.commands.bench import bench_bp

    app.register_blueprint(bench_bp)
