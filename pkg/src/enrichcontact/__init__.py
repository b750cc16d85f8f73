"""Interface-enriched coupling of non-conforming triangle meshes and frictionless contact."""

__version__ = "0.1.0"
