"""Multivariate wavelet Whittle estimation of long memory with asymptotic inference."""

__version__ = "0.1.0"
