"""Custom decorators for kpeaks source code."""
import functools
import sys

import click

from kpeaks.errors import KpeaksError


def add_logging_options(func):
    """Add log_file and verbose options."""
    add_log_file = click.option(
        "--log-file",
        "-l",
        type=click.Path(dir_okay=False),
        default="./kpeaks.log",
        show_default=True,
        help="Where to save logs.",
    )
    add_verbose = click.option(
        "--verbose",
        "-v",
        is_flag=True,
        help="Display logging messages to console.",
    )
    return add_log_file(add_verbose(func))


def exit_with(err: KpeaksError, manifest=None):
    """Print the error and exit with the error family's code.

    The manifest, if any, is saved with the failing stage.
    """
    print(f"Error: {err}")
    if manifest is not None:
        manifest.fail(err)
        print(f'Run manifest saved to "{manifest.save()}"')
    sys.exit(err.exit_code)


def handle_common_errors(func):
    """Handle kpeaks errors from a subcommand and always write its run manifest."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        manifest = (ctx.obj or {}).get("manifest")
        try:
            result = func(*args, **kwargs)
            if manifest is not None:
                manifest.require_checks()
        except KpeaksError as err:
            exit_with(err, manifest)
        else:
            if manifest is not None:
                print(f'Run manifest saved to "{manifest.save()}"')
            return result
        return None

    return wrapper
