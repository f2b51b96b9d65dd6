"""Global pseudo-differential quantization on concrete locally compact groups."""

__version__ = "0.1.0"
