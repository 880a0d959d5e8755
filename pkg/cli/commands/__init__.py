"""Subcommands for EventKernel."""
