"""yulepaint: exact dynamics and stochastic simulators for a depinning
transition built from painted Yule trees, interacting particles and
growth-fragmentation trees."""

__version__ = "0.1.0"
