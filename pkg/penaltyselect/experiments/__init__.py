"""Random instance generation and batch experiments."""
