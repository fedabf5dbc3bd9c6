"""Tests for rangeloc."""
