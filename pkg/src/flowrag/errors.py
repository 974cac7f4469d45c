"""Shared exception base for the flowrag package."""


class FlowragError(Exception):
    """Base class for all errors raised by flowrag modules."""
