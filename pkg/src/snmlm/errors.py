"""Shared exception types for the toolkit."""


class SnmError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SnmError):
    """Malformed feature-extractor configuration."""


class DataError(SnmError):
    """Malformed or inconsistent data: corpus files, count tables, models."""
