"""trapablate: simulation and planning toolkit for in-situ ablation removal
of transport-blocking defects on surface-electrode ion traps."""

__version__ = "0.1.0"
