"""Template-assisted unsupervised point-cloud shape correspondence."""

__version__ = "0.1.0"
