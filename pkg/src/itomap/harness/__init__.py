"""Scenario configuration, orchestration, persistence, diagnostics and the CLI."""
