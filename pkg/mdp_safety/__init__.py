"""Probabilistic safety certification and safe off-policy TD(0) learning on finite MDPs."""
__all__ = []
