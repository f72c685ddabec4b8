"""Location-aware bi-encoder dense retrieval for POI recommendation questions."""

__version__ = "0.1.0"
