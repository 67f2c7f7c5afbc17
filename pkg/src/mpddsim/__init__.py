"""Link-level simulation of metasurface-programmable doubly-dispersive MIMO channels."""

__version__ = "0.1.0"
