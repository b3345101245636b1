"""Few-shot time-series classification with a Siamese 1-D CNN and 1-NN baselines."""

__version__ = "0.1.0"
