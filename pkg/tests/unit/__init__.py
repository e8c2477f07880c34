"""Unit tests for the many-worlds renderer."""

