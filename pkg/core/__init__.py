"""Core types, errors, logging and run monitoring."""
