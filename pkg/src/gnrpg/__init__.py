"""Power-gating simulation toolkit with a GNRFET compact model."""

__version__ = "0.1.0"
