"""Test suite for rigtrack."""
