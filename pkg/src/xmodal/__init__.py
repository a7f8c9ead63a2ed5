"""Cross-modal self-supervised matching losses, toy encoders and a synthetic world."""

__version__ = "0.1.0"
