"""squeezekit: compression policies and a benchmark harness for a
deterministic desk-scale multimodal transformer."""

__version__ = "0.1.0"
