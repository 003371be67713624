"""GPT-2 checkpoint to TSUPW1 converter."""

from .export import ExportError, ExportManifest, export

__all__ = ["ExportError", "ExportManifest", "export"]
__version__ = "0.1.0"
