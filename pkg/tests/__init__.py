"""Tests for qkd-sift."""
