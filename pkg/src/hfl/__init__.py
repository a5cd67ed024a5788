"""Floor-plan hedonic learning: synthetic market, residual CNN, and
sentiment-augmented rent regression."""

__version__ = "0.1.0"
