"""Region- and spatial-aware anomaly detection for retinal fundus images."""

__version__ = "0.1.0"
