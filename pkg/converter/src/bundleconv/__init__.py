"""Dataset-to-bundle converter: citation benchmarks and synthetic generators."""

from .formats import BundleManifest, ConvertError, read_manifest, write_bundle
from .planetoid import convert
from .synth import gen_synthetic

__version__ = "0.1.0"
