"""Analytic scenes and fields for testing."""
