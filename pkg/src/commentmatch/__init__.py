"""Article-comment matching: sparse attention, star encoder, siamese training."""

__version__ = "0.1.0"
