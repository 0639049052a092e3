"""Experiment harness: datasets, evaluation, sweeps, reports and the CLI."""
