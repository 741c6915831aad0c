from __future__ import annotations


class MpmabError(Exception):
    """Root of every error raised by mpmab."""


class InvalidDopError(MpmabError, ValueError):
    """A doubly ordered partition is malformed, outside the tree, or used where it is not defined."""


class InvalidInputError(MpmabError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(MpmabError, ValueError):
    """A configuration file or flag set cannot be turned into an experiment."""


class PartitionContractError(MpmabError, RuntimeError):
    """The descent found no child with a large enough cut (requires c <= 1/K)."""


class InvariantViolation(MpmabError, AssertionError):
    """An internal invariant that the algorithm guarantees by construction was broken."""
