import asyncio
import sys

from . import cli


def main():
    """Main entry point for the package."""
    sys.exit(asyncio.run(cli.main()))


__all__ = ['main', 'cli']
