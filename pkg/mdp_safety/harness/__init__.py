"""Experiment harness: instance generation, certification gate, reports."""
