"""Proactive yield-and-recover navigation for a robot sharing space with people."""

__version__ = "0.1.0"
