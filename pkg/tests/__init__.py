"""Test suite for v2x-stacking."""
