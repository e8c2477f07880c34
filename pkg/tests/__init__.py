"""Many-worlds renderer test suite."""

