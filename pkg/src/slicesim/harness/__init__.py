"""Experiment harness: config, metrics, runner, grid oracle, comparison, CLI."""
