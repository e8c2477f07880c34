"""Integration tests for the many-worlds renderer."""

