"""
imig - Command Line Entry Point
================================
`imig` console script. Builds the application through the factory and exposes
the bench commands at the top level:

    imig run bar2d --config configs/bar2d.toml --out results/
    imig sweep eigenstrain --fg-depth 0 --fg-depth 3
    imig export-mesh thermoelastic
    imig dump-operator bar2d --field T
"""

from flask.cli import FlaskGroup

from imig import create_app


def _create_app():
    return create_app()


cli = FlaskGroup(
    name='imig',
    create_app=_create_app,
    add_default_commands=False,
    add_version_option=False,
    load_dotenv=False,
    help='Interpolation-based immersogeometric analysis benchmarks.',
)


def main():
    cli.main(prog_name='imig')
