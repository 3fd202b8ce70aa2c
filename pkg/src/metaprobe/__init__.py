"""Layer-wise probing engine for serialized span representations:
edge-probing accuracy, MDL online-coding compression, and
cross-distribution transfer matrices."""

__version__ = "0.1.0"
