"""Tests for the intentgames package."""
