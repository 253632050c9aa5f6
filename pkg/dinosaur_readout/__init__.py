"""Corrugated nanobeam reflector design and colour-centre single-shot readout analysis."""

__version__ = "1.0.0"
