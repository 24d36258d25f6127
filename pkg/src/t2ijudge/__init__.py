"""t2ijudge: staged text-to-image evaluation toolkit."""

__version__ = "0.1.0"
