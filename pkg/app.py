#!/usr/bin/env python3
"""
EventKernel - neural influence-kernel marked point processes
Command-line entry point.
"""

from cli import create_cli


def main():
    """Main entry point."""
    cli = create_cli()
    cli(prog_name='eventkernel')


if __name__ == '__main__':
    main()
