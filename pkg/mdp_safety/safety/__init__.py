"""Exact safety computation, proxy validation and Monte-Carlo cross-checks."""
