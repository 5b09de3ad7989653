"""Tests package for pymicg."""
