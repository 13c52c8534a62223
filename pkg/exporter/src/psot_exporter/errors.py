"""Exporter exception types."""


class ExportError(Exception):
    """Base class for exporter failures."""


class MediaError(ExportError):
    """Media is missing, undecodable, or too short."""


class EncoderLoadError(ExportError):
    """The requested encoder is unknown or failed to load."""
