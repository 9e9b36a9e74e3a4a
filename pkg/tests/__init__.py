"""Package initialization for tests."""
