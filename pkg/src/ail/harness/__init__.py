"""Experiment harness: configuration, RNG substreams, runners and the CLI."""
