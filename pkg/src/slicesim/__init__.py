"""Multi-cell RAN slicing simulator and constrained TD3 resource agents."""

__version__ = "0.1.0"
