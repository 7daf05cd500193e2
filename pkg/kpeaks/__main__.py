"""Run the package with -m and use the kpeaks CLI."""
from kpeaks.cli import main


# pylint: disable=no-value-for-parameter,unexpected-keyword-arg
main(prog_name="kpeaks")
