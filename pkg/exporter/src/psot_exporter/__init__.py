"""Real media to .psot feature bundles via pluggable encoders."""

from .errors import EncoderLoadError, ExportError, MediaError
from .export import ExportSpec, export, pool_2x2

__version__ = "0.1.0"
