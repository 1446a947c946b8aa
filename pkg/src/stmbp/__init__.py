"""Blood pressure estimation from facial-video spatial-temporal maps."""

__version__ = "0.1.0"
