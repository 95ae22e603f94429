"""External-process adapters (segmentation and CNN tools) and their deterministic mocks."""

from .manifest import (AdapterManifest, ManifestError, builtin_manifests, load_manifests, mock_manifests,
                       write_manifests)
from .runner import AdapterResult, build_argv, register_adapters, run_adapter

__all__ = ["AdapterManifest", "AdapterResult", "ManifestError", "build_argv", "builtin_manifests", "load_manifests",
           "mock_manifests", "register_adapters", "run_adapter", "write_manifests"]
