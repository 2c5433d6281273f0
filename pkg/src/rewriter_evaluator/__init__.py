"""Multi-pass rewriting with a learned evaluator, trained by prioritized gradient descent."""

__version__ = "0.1.0"
