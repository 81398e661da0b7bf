"""CLI module for the safety verifier."""
