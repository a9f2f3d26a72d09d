"""Shared exception types."""


class SwarmNavError(Exception):
    """Base class for package errors."""


class DimensionError(SwarmNavError):
    """Array shapes are incompatible with the requested operation."""


class ContractError(SwarmNavError):
    """A caller violated an API precondition."""


class NumericError(SwarmNavError):
    """A NaN/Inf appeared where only finite values are allowed."""


class ConfigError(SwarmNavError):
    """A configuration file or key is invalid."""


class InfeasibleScenarioError(SwarmNavError):
    """Entity placement failed within the rejection-sampling budget."""


class CheckpointError(SwarmNavError):
    """A checkpoint file is malformed or inconsistent with the request."""
