"""PtychoMix - ptychographic simulation and maximum-likelihood reconstruction."""

__version__ = "0.1.0"
__license__ = "MIT"
