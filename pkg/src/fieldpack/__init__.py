"""fieldpack: a field data-acquisition daemon runnable against simulated sensors."""

__version__ = "0.1.0"
