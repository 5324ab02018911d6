"""cloudseg: U-Net sky/cloud segmentation on the CPU."""
from __future__ import annotations
from importlib import metadata

PACKAGE_NAME = "cloudseg"

try:
    __version__ = metadata.version(PACKAGE_NAME)
except metadata.PackageNotFoundError:
    # source checkout without an install
    __version__ = "0.1.0.dev0"

__all__ = ["PACKAGE_NAME", "__version__"]
