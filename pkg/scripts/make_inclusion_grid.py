"""
imig - Inclusion Grid Script
Regenerates data/composite_lsf.txt, the sampled level set of the composite
used by the thermoelastic case (positive inside the inclusions).

Usage:
    python scripts/make_inclusion_grid.py
    python scripts/make_inclusion_grid.py --out /tmp/grid.txt --nodes 161 --spacing 0.01
"""
import os
import sys

import click

# Ensure the project root is on the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from imig.models import INCLUSION_DISCS
from imig.services.geometry import inclusion_field, write_lsf_grid

DEFAULT_OUT = os.path.join(os.path.dirname(__file__), '..', 'data', 'composite_lsf.txt')


@click.command()
@click.option('--out', default=DEFAULT_OUT, type=click.Path(dir_okay=False), show_default=True)
@click.option('--nodes', default=81, show_default=True, help='Grid nodes per direction.')
@click.option('--spacing', default=0.02, show_default=True, help='Grid spacing.')
def main(out, nodes, spacing):
    lsf = inclusion_field(INCLUSION_DISCS, (0.0, 0.0), (spacing, spacing), (nodes, nodes))
    write_lsf_grid(out, lsf)
    inside = int((lsf.values > lsf.iso).sum())
    click.echo(f"Wrote {nodes}x{nodes} grid ({inside} nodes inside inclusions) to {out}")


if __name__ == '__main__':
    main()
