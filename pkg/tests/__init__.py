"""Test suite for the tfcl package."""
