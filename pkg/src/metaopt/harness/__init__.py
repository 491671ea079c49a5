"""Experiment harness: configs, scenario runner, CLI."""
