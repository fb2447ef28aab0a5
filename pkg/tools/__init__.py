"""Command-line entry point and the runtime smoke check."""
