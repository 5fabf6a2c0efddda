"""Gate-level simulation and resource analysis of split-operator quantum chemical dynamics."""

__version__ = "0.1.0"
